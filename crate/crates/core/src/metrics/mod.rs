//! Daily and weekly cache-utilization summaries and the metrics derived from them.
//!
//! Sizes are exact integer bytes throughout; ratios are only formed at the
//! reporting boundary. Failed transfers are ignored by every aggregate.

mod io;
mod reuse;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::trace::{AccessKind, AccessRecord};

pub use io::{read_summaries, write_summaries, SummaryRow};
pub use reuse::{reuse_metrics, ReuseStats};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("moving-average window must be at least 1")]
    ZeroWindow,
    #[error("records span more than one UTC day ({first} .. {last})")]
    MixedDays { first: NaiveDate, last: NaiveDate },
    #[error("series and mask lengths differ ({series} vs {mask})")]
    LengthMismatch { series: usize, mask: usize },
    #[error("summary input: {0}")]
    Csv(#[from] csv::Error),
    #[error("summary input: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Either the whole federation or a single cache node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Scope {
    #[default]
    All,
    Node(String),
}

impl Scope {
    pub fn matches(&self, record: &AccessRecord) -> bool {
        match self {
            Scope::All => true,
            Scope::Node(id) => record.node_id == *id,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::All => f.write_str("ALL"),
            Scope::Node(id) => f.write_str(id),
        }
    }
}

impl FromStr for Scope {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s.eq_ignore_ascii_case("all") { Scope::All } else { Scope::Node(s.to_string()) })
    }
}

impl Serialize for Scope {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().expect("infallible"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    #[default]
    Day,
    /// ISO week, labelled by its Monday.
    Week,
}

impl FromStr for Period {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "day" | "daily" => Ok(Period::Day),
            "week" | "weekly" => Ok(Period::Week),
            other => Err(format!("unknown period `{other}`")),
        }
    }
}

/// The eight-feature aggregate of one period, plus the reuse file count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailySummary {
    pub date: NaiveDate,
    pub scope: Scope,
    pub access_count: u64,
    pub access_size: u64,
    pub hit_count: u64,
    pub hit_size: u64,
    pub miss_count: u64,
    pub miss_size: u64,
    pub reuse_count: u64,
    pub reuse_size: u64,
    pub unique_reused_files: u64,
}

impl DailySummary {
    pub fn empty(date: NaiveDate, scope: Scope) -> Self {
        DailySummary {
            date,
            scope,
            access_count: 0,
            access_size: 0,
            hit_count: 0,
            hit_size: 0,
            miss_count: 0,
            miss_size: 0,
            reuse_count: 0,
            reuse_size: 0,
            unique_reused_files: 0,
        }
    }

    /// Accumulate another summary's counters (date and scope are kept).
    pub fn add(&mut self, other: &DailySummary) {
        self.access_count += other.access_count;
        self.access_size += other.access_size;
        self.hit_count += other.hit_count;
        self.hit_size += other.hit_size;
        self.miss_count += other.miss_count;
        self.miss_size += other.miss_size;
        self.reuse_count += other.reuse_count;
        self.reuse_size += other.reuse_size;
        self.unique_reused_files += other.unique_reused_files;
    }

    /// A day with no successful accesses (a monitoring gap or an idle day).
    pub fn is_gap(&self) -> bool {
        self.access_count == 0
    }

    /// Forecaster feature vector: access, hit, miss and reuse counts and sizes.
    pub fn features(&self) -> [f64; 8] {
        [
            self.access_count as f64,
            self.access_size as f64,
            self.hit_count as f64,
            self.hit_size as f64,
            self.miss_count as f64,
            self.miss_size as f64,
            self.reuse_count as f64,
            self.reuse_size as f64,
        ]
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.access_count != self.hit_count + self.miss_count {
            return Err(format!("{}: access_count != hit_count + miss_count", self.date));
        }
        if self.access_size != self.hit_size + self.miss_size {
            return Err(format!("{}: access_size != hit_size + miss_size", self.date));
        }
        if self.reuse_count > self.hit_count || self.reuse_size > self.hit_size {
            return Err(format!("{}: reuse exceeds hits", self.date));
        }
        if self.unique_reused_files > self.reuse_count {
            return Err(format!("{}: more reused files than reuse events", self.date));
        }
        Ok(())
    }
}

/// Anything carrying hit (shared) and miss (transferred) byte totals.
pub trait TrafficVolume {
    fn hit_size(&self) -> u64;
    fn miss_size(&self) -> u64;
    fn access_size(&self) -> u64 {
        self.hit_size() + self.miss_size()
    }
}

impl TrafficVolume for DailySummary {
    fn hit_size(&self) -> u64 {
        self.hit_size
    }
    fn miss_size(&self) -> u64 {
        self.miss_size
    }
    fn access_size(&self) -> u64 {
        self.access_size
    }
}

/// Fraction of accessed bytes served from cache: shared / total access size.
pub fn net_traffic_reduction<T: TrafficVolume + ?Sized>(s: &T) -> f64 {
    let total = s.access_size();
    if total == 0 {
        0.0
    } else {
        s.hit_size() as f64 / total as f64
    }
}

/// Total access size over miss size, with in-band sentinels for empty denominators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReductionRate {
    Finite(f64),
    /// Hits but no misses.
    Infinite,
    /// No traffic at all.
    Undefined,
}

impl ReductionRate {
    pub fn from_sizes(access_size: u64, miss_size: u64) -> Self {
        match (access_size, miss_size) {
            (0, 0) => ReductionRate::Undefined,
            (_, 0) => ReductionRate::Infinite,
            (a, m) => ReductionRate::Finite(a as f64 / m as f64),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            ReductionRate::Finite(v) => v,
            ReductionRate::Infinite => f64::INFINITY,
            ReductionRate::Undefined => f64::NAN,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ReductionRate::Finite(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for ReductionRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReductionRate::Finite(v) => write!(f, "{v}"),
            ReductionRate::Infinite => f.write_str("inf"),
            ReductionRate::Undefined => Ok(()),
        }
    }
}

impl Serialize for ReductionRate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ReductionRate::Finite(v) => s.serialize_f64(*v),
            ReductionRate::Infinite => s.serialize_str("inf"),
            ReductionRate::Undefined => s.serialize_none(),
        }
    }
}

/// Network traffic demand reduction rate: (hit size + miss size) / miss size.
pub fn traffic_demand_reduction_rate<T: TrafficVolume + ?Sized>(s: &T) -> ReductionRate {
    ReductionRate::from_sizes(s.access_size(), s.miss_size())
}

/// Mean bytes per access, 0 for an empty period.
pub fn average_access_size(s: &DailySummary) -> f64 {
    if s.access_count == 0 {
        0.0
    } else {
        s.access_size as f64 / s.access_count as f64
    }
}

/// Reuse events per reused file; the size-based variant is [`reuse_size_rate`].
pub fn reuse_rate(s: &DailySummary) -> f64 {
    if s.unique_reused_files == 0 {
        0.0
    } else {
        s.reuse_count as f64 / s.unique_reused_files as f64
    }
}

/// Reused bytes per reused file.
pub fn reuse_size_rate(s: &DailySummary) -> f64 {
    if s.unique_reused_files == 0 {
        0.0
    } else {
        s.reuse_size as f64 / s.unique_reused_files as f64
    }
}

fn week_start(date: NaiveDate) -> NaiveDate {
    date - Days::new(u64::from(date.weekday().num_days_from_monday()))
}

fn summarize_day(date: NaiveDate, scope: &Scope, records: &[(usize, &AccessRecord)]) -> DailySummary {
    let mut s = DailySummary::empty(date, scope.clone());
    for (_, r) in records {
        s.access_count += 1;
        s.access_size += r.transfer_size;
        match r.kind {
            AccessKind::Hit => {
                s.hit_count += 1;
                s.hit_size += r.transfer_size;
            }
            AccessKind::Miss => {
                s.miss_count += 1;
                s.miss_size += r.transfer_size;
            }
        }
    }
    let reuse = reuse::reuse_of(records.iter().copied());
    s.reuse_count = reuse.reuse_count;
    s.reuse_size = reuse.reuse_size;
    s.unique_reused_files = reuse.unique_reused_files;
    s
}

/// One summary per period between the first and last successful record of the
/// whole trace, zero-filled where `scope` saw nothing.
///
/// Weekly rows sum the daily rows of each ISO week, so reuse stays a same-day notion.
pub fn aggregate(trace: &[AccessRecord], period: Period, scope: &Scope) -> Vec<DailySummary> {
    let ok = || trace.iter().enumerate().filter(|(_, r)| r.success);
    let Some(first) = ok().map(|(_, r)| r.date()).min() else {
        return Vec::new();
    };
    let last = ok().map(|(_, r)| r.date()).max().expect("non-empty");

    let mut by_day: BTreeMap<NaiveDate, Vec<(usize, &AccessRecord)>> = BTreeMap::new();
    for (i, r) in ok().filter(|(_, r)| scope.matches(r)) {
        by_day.entry(r.date()).or_default().push((i, r));
    }
    let daily = first.iter_days().take_while(|d| *d <= last).map(|date| {
        let records = by_day.get(&date).map(Vec::as_slice).unwrap_or(&[]);
        summarize_day(date, scope, records)
    });

    match period {
        Period::Day => daily.collect(),
        Period::Week => {
            let mut weeks: Vec<DailySummary> = Vec::new();
            let mut week = week_start(first);
            while week <= last {
                weeks.push(DailySummary::empty(week, scope.clone()));
                week = week + Days::new(7);
            }
            for day in daily {
                let idx = ((week_start(day.date) - week_start(first)).num_days() / 7) as usize;
                weeks[idx].add(&day);
            }
            weeks
        }
    }
}

/// Federation-wide rows followed by each node's rows (nodes sorted by id),
/// all over the same date range.
pub fn aggregate_all_scopes(trace: &[AccessRecord], period: Period) -> Vec<DailySummary> {
    let nodes: std::collections::BTreeSet<&str> =
        trace.iter().filter(|r| r.success).map(|r| r.node_id.as_str()).collect();
    let mut out = aggregate(trace, period, &Scope::All);
    for node in nodes {
        out.extend(aggregate(trace, period, &Scope::Node(node.to_string())));
    }
    out
}

/// Trailing moving average; the first `window - 1` outputs average what is available.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>, MetricsError> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

/// Moving average whose denominators count only entries marked present.
/// A window with nothing present yields 0.
pub fn moving_average_masked(series: &[f64], present: &[bool], window: usize) -> Result<Vec<f64>, MetricsError> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    if series.len() != present.len() {
        return Err(MetricsError::LengthMismatch { series: series.len(), mask: present.len() });
    }
    let mut out = Vec::with_capacity(series.len());
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..series.len() {
        if present[i] {
            sum += series[i];
            n += 1;
        }
        if i >= window && present[i - window] {
            sum -= series[i - window];
            n -= 1;
        }
        out.push(if n == 0 { 0.0 } else { sum / n as f64 });
    }
    Ok(out)
}

/// Reduction rate over each trailing window of `window` periods, i.e. the
/// ratio of moving sums of access and miss sizes.
pub fn windowed_reduction_rate(summaries: &[DailySummary], window: usize) -> Result<Vec<ReductionRate>, MetricsError> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    let mut out = Vec::with_capacity(summaries.len());
    let (mut access, mut miss) = (0u64, 0u64);
    for (i, s) in summaries.iter().enumerate() {
        access += s.access_size;
        miss += s.miss_size;
        if i >= window {
            access -= summaries[i - window].access_size;
            miss -= summaries[i - window].miss_size;
        }
        out.push(ReductionRate::from_sizes(access, miss));
    }
    Ok(out)
}

/// Calendar-month totals of daily summaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonthlyRollup {
    pub year: i32,
    pub month: u32,
    /// Number of daily rows folded in.
    pub days: u32,
    pub totals: DailySummary,
}

impl TrafficVolume for MonthlyRollup {
    fn hit_size(&self) -> u64 {
        self.totals.hit_size
    }
    fn miss_size(&self) -> u64 {
        self.totals.miss_size
    }
    fn access_size(&self) -> u64 {
        self.totals.access_size
    }
}

pub fn monthly_rollup(daily: &[DailySummary]) -> Vec<MonthlyRollup> {
    let mut months: BTreeMap<(i32, u32), MonthlyRollup> = BTreeMap::new();
    for d in daily {
        let key = (d.date.year(), d.date.month());
        let entry = months.entry(key).or_insert_with(|| MonthlyRollup {
            year: key.0,
            month: key.1,
            days: 0,
            totals: DailySummary::empty(
                NaiveDate::from_ymd_opt(key.0, key.1, 1).expect("valid month"),
                d.scope.clone(),
            ),
        });
        entry.days += 1;
        entry.totals.add(d);
    }
    months.into_values().collect()
}
