use std::collections::HashMap;

use serde::Serialize;

use super::{MetricsError, Scope};
use crate::trace::{AccessKind, AccessRecord};

/// Same-day reuse of cached files.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ReuseStats {
    pub reuse_count: u64,
    pub reuse_size: u64,
    pub unique_reused_files: u64,
    /// Reuse events per reused file, 0 when nothing was reused.
    pub reuse_rate: f64,
}

// (ts_start, ts_end, input index, kind, transfer_size)
type Access = (i64, i64, usize, AccessKind, u64);

/// Reuse counting over successful records already known to share a day.
///
/// Per file, accesses are ordered by (ts_start, ts_end, input index). Each
/// maximal run of consecutive hits of length k yields k - 1 reuse events, and
/// the bytes of the 2nd..kth hits count as reused. A miss ends a run.
pub(super) fn reuse_of<'a>(records: impl Iterator<Item = (usize, &'a AccessRecord)>) -> ReuseStats {
    let mut per_file: HashMap<&str, Vec<Access>> = HashMap::new();
    for (i, r) in records {
        per_file
            .entry(r.file_id.as_str())
            .or_default()
            .push((r.ts_start, r.ts_end, i, r.kind, r.transfer_size));
    }
    let mut stats = ReuseStats::default();
    for accesses in per_file.values_mut() {
        accesses.sort_unstable_by_key(|&(start, end, idx, _, _)| (start, end, idx));
        let mut in_run = false;
        let mut reused_here = false;
        for &(_, _, _, kind, bytes) in accesses.iter() {
            match kind {
                AccessKind::Miss => in_run = false,
                AccessKind::Hit if in_run => {
                    stats.reuse_count += 1;
                    stats.reuse_size += bytes;
                    reused_here = true;
                }
                AccessKind::Hit => in_run = true,
            }
        }
        if reused_here {
            stats.unique_reused_files += 1;
        }
    }
    if stats.unique_reused_files > 0 {
        stats.reuse_rate = stats.reuse_count as f64 / stats.unique_reused_files as f64;
    }
    stats
}

/// Reuse metrics of one UTC day's records within `scope`. Failed records are ignored.
pub fn reuse_metrics(records: &[AccessRecord], scope: &Scope) -> Result<ReuseStats, MetricsError> {
    let ok: Vec<(usize, &AccessRecord)> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.success && scope.matches(r))
        .collect();
    if let (Some(first), Some(last)) = (
        ok.iter().map(|(_, r)| r.date()).min(),
        ok.iter().map(|(_, r)| r.date()).max(),
    ) {
        if first != last {
            return Err(MetricsError::MixedDays { first, last });
        }
    }
    Ok(reuse_of(ok.into_iter()))
}
