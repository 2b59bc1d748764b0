use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::Serialize;

use super::{
    average_access_size, net_traffic_reduction, reuse_rate, reuse_size_rate, traffic_demand_reduction_rate,
    DailySummary, MetricsError, ReductionRate, Scope,
};
use crate::OutputFormat;

/// A summary plus its derived metrics, as written to disk.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
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
    pub avg_access_size: f64,
    pub net_traffic_reduction: f64,
    pub traffic_demand_reduction_rate: ReductionRate,
    pub reuse_rate: f64,
    pub reuse_size_rate: f64,
}

impl From<&DailySummary> for SummaryRow {
    fn from(s: &DailySummary) -> Self {
        SummaryRow {
            date: s.date,
            scope: s.scope.clone(),
            access_count: s.access_count,
            access_size: s.access_size,
            hit_count: s.hit_count,
            hit_size: s.hit_size,
            miss_count: s.miss_count,
            miss_size: s.miss_size,
            reuse_count: s.reuse_count,
            reuse_size: s.reuse_size,
            unique_reused_files: s.unique_reused_files,
            avg_access_size: average_access_size(s),
            net_traffic_reduction: net_traffic_reduction(s),
            traffic_demand_reduction_rate: traffic_demand_reduction_rate(s),
            reuse_rate: reuse_rate(s),
            reuse_size_rate: reuse_size_rate(s),
        }
    }
}

pub fn write_summaries<W: Write>(writer: W, summaries: &[DailySummary], format: OutputFormat) -> Result<(), MetricsError> {
    let rows: Vec<SummaryRow> = summaries.iter().map(SummaryRow::from).collect();
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let mut writer = writer;
            serde_json::to_writer_pretty(&mut writer, &rows)?;
            writeln!(writer)?;
        }
    }
    Ok(())
}

/// Read summaries back; derived metric columns are ignored.
pub fn read_summaries<R: Read>(reader: R, format: OutputFormat) -> Result<Vec<DailySummary>, MetricsError> {
    match format {
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_reader(reader);
            r.deserialize().map(|row| row.map_err(MetricsError::from)).collect()
        }
        OutputFormat::Json => Ok(serde_json::from_reader(reader)?),
    }
}
