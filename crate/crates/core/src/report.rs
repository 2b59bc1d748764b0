//! Monthly summary tables in the layout of the study's access statistics.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{FeatureSeries, FEATURE_NAMES};
use crate::metrics::{monthly_rollup, net_traffic_reduction, windowed_reduction_rate, DailySummary, MetricsError, TrafficVolume};
use crate::seasonality::{detect_peaks, periodogram, PeriodogramPoint};
use crate::OutputFormat;

pub const BYTES_PER_TB: f64 = 1e12;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no daily summaries to report on")]
    EmptyInput,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    /// `YYYY-MM`, `Total` or `Daily Average`.
    pub label: String,
    pub accesses: f64,
    pub transfer_tb: f64,
    pub shared_tb: f64,
    /// Shared share of all accessed bytes, in percent.
    pub net_reduction_pct: f64,
}

struct Volumes {
    hit: u64,
    miss: u64,
}

impl TrafficVolume for Volumes {
    fn hit_size(&self) -> u64 {
        self.hit
    }
    fn miss_size(&self) -> u64 {
        self.miss
    }
}

impl Table1Row {
    /// Row from published figures in TB; the percentage is recomputed.
    pub fn from_tb(label: impl Into<String>, accesses: f64, transfer_tb: f64, shared_tb: f64) -> Self {
        let bytes = |tb: f64| (tb * BYTES_PER_TB).round() as u64;
        let pct = 100.0 * net_traffic_reduction(&Volumes { hit: bytes(shared_tb), miss: bytes(transfer_tb) });
        Table1Row { label: label.into(), accesses, transfer_tb, shared_tb, net_reduction_pct: pct }
    }

    fn from_summary(label: impl Into<String>, s: &DailySummary, divisor: f64) -> Self {
        Table1Row {
            label: label.into(),
            accesses: s.access_count as f64 / divisor,
            transfer_tb: s.miss_size as f64 / BYTES_PER_TB / divisor,
            shared_tb: s.hit_size as f64 / BYTES_PER_TB / divisor,
            net_reduction_pct: 100.0 * net_traffic_reduction(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub rows: Vec<Table1Row>,
}

/// One row per calendar month, then `Total` and `Daily Average` (totals over
/// the number of daily rows, gap days included).
pub fn table1(daily: &[DailySummary]) -> Result<Table1Report, ReportError> {
    let first = daily.first().ok_or(ReportError::EmptyInput)?;
    let months = monthly_rollup(daily);
    let mut total = DailySummary::empty(first.date, first.scope.clone());
    let mut rows = Vec::with_capacity(months.len() + 2);
    for m in &months {
        total.add(&m.totals);
        rows.push(Table1Row::from_summary(format!("{:04}-{:02}", m.year, m.month), &m.totals, 1.0));
    }
    rows.push(Table1Row::from_summary("Total", &total, 1.0));
    rows.push(Table1Row::from_summary("Daily Average", &total, daily.len() as f64));
    Ok(Table1Report { rows })
}

pub fn emit_report<W: Write>(report: &Table1Report, mut w: W, format: OutputFormat) -> Result<(), ReportError> {
    match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut w, report)?;
            writeln!(w)?;
        }
        OutputFormat::Csv => {
            let mut csv = csv::Writer::from_writer(w);
            for row in &report.rows {
                csv.serialize(row)?;
            }
            csv.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeaturePeaks {
    pub feature: String,
    pub peaks: Vec<PeriodogramPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub date: NaiveDate,
    pub rate: Option<f64>,
}

/// Everything the `report` command emits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedReport {
    pub table1: Table1Report,
    /// Traffic demand reduction rate over trailing 7-day windows; `None` where undefined or infinite.
    pub reduction_rate_7d: Vec<RatePoint>,
    /// Strongest periodogram bins per feature; empty for series shorter than 4 days.
    pub seasonality: Vec<FeaturePeaks>,
}

pub fn combined_report(daily: &[DailySummary], top_k: usize) -> Result<CombinedReport, ReportError> {
    let table1 = table1(daily)?;
    let rates = windowed_reduction_rate(daily, 7)?;
    let reduction_rate_7d = daily.iter().zip(rates).map(|(d, r)| RatePoint { date: d.date, rate: r.finite() }).collect();
    let series = FeatureSeries::from_summaries(daily);
    let seasonality = FEATURE_NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let column: Vec<f64> = series.values.iter().map(|r| r[j]).collect();
            let peaks = periodogram(&column).map(|pg| detect_peaks(&pg, top_k)).unwrap_or_default();
            FeaturePeaks { feature: name.to_string(), peaks }
        })
        .collect();
    Ok(CombinedReport { table1, reduction_rate_7d, seasonality })
}
