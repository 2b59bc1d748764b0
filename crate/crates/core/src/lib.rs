//! Trace-driven simulation and analysis of a federated regional storage cache.
//!
//! The crate is organised as a pipeline:
//!
//! * [`trace`]: access-record schema, trace I/O and synthetic workloads;
//! * [`federation`]: deterministic simulator of redirector-routed cache nodes;
//! * [`metrics`]: daily/weekly summaries, traffic-reduction and reuse metrics;
//! * [`forecast`]: z-score normalisation, windowing and an LSTM forecaster
//!   trained from scratch by backpropagation through time;
//! * [`seasonality`]: periodograms and dominant-period detection;
//! * [`report`]: monthly rollup tables;
//! * [`cli`]: the `cachescope` command line.

pub mod cli;
pub mod federation;
pub mod forecast;
pub mod metrics;
pub mod report;
pub mod seasonality;
pub mod trace;

use std::str::FromStr;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Tabular output encoding for summaries, reports and leaderboards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    /// `.json` means JSON, anything else CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => OutputFormat::Json,
            _ => OutputFormat::Csv,
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

/// UTC calendar day containing `ts` (epoch seconds).
pub fn utc_date(ts: i64) -> NaiveDate {
    DateTime::from_timestamp(ts.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY, 0)
        .expect("timestamp in chrono range")
        .date_naive()
}

/// Epoch seconds of 00:00:00 UTC on `date`.
pub fn day_start(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp()
}
