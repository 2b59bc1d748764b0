//! Access-record schema, trace file I/O and synthetic workloads.
//!
//! A trace is a sequence of [`AccessRecord`]s, one per monitored cache access.
//! Two interchangeable on-disk forms are supported: CSV with a fixed column
//! order and a mandatory header, and JSON lines with the same field names.

mod workload;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use workload::{
    generate_workload, synthetic_daily_series, FileSizeDistribution, RegimeShift, WorkloadConfig,
    WorkloadError,
};

/// Canonical CSV column order.
pub const CSV_COLUMNS: [&str; 10] = [
    "ts_start",
    "ts_end",
    "user_id",
    "file_id",
    "file_path",
    "file_size",
    "transfer_size",
    "kind",
    "node_id",
    "success",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Hit,
    Miss,
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessKind::Hit => "hit",
            AccessKind::Miss => "miss",
        })
    }
}

/// One monitored cache access.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    /// Transmission start, epoch seconds UTC.
    pub ts_start: i64,
    /// Transmission end, epoch seconds UTC.
    pub ts_end: i64,
    pub user_id: String,
    pub file_id: String,
    pub file_path: String,
    pub file_size: u64,
    /// Bytes actually moved: served bytes for a hit, fetched bytes for a miss.
    pub transfer_size: u64,
    pub kind: AccessKind,
    pub node_id: String,
    pub success: bool,
}

impl AccessRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.ts_end < self.ts_start {
            return Err(RecordError::SchemaViolation(format!(
                "ts_end {} precedes ts_start {}",
                self.ts_end, self.ts_start
            )));
        }
        if self.transfer_size > self.file_size {
            return Err(RecordError::SchemaViolation(format!(
                "transfer_size {} exceeds file_size {}",
                self.transfer_size, self.file_size
            )));
        }
        if self.kind == AccessKind::Miss && self.success && self.transfer_size == 0 {
            return Err(RecordError::SchemaViolation(
                "successful miss with zero transfer_size".into(),
            ));
        }
        Ok(())
    }

    /// UTC calendar day of the transmission start.
    pub fn date(&self) -> chrono::NaiveDate {
        crate::utc_date(self.ts_start)
    }
}

/// A request presented to the federation, before it is resolved as hit or miss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRequest {
    pub time: i64,
    pub user_id: String,
    pub file_id: String,
    pub file_size: u64,
    /// Total bytes of the requested byte ranges.
    pub request_size: u64,
    pub namespace: String,
}

impl FileRequest {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.request_size == 0 {
            return Err(RecordError::SchemaViolation("request_size must be positive".into()));
        }
        if self.request_size > self.file_size {
            return Err(RecordError::SchemaViolation(format!(
                "request_size {} exceeds file_size {}",
                self.request_size, self.file_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    #[default]
    Csv,
    Jsonl,
}

impl TraceFormat {
    /// Guess from a file extension; anything other than `.jsonl`/`.json` is CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => TraceFormat::Jsonl,
            _ => TraceFormat::Csv,
        }
    }
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TraceFormat::Csv),
            "jsonl" | "json" => Ok(TraceFormat::Jsonl),
            other => Err(format!("unknown trace format `{other}`")),
        }
    }
}

/// Failure to turn one line into a valid record.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Record {
        line: usize,
        #[source]
        source: RecordError,
    },
    #[error("bad CSV header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("missing CSV header")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parse a single data line (no header) in the given format.
pub fn parse_record(line: &str, format: TraceFormat) -> Result<AccessRecord, RecordError> {
    let record: AccessRecord = match format {
        TraceFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .from_reader(line.as_bytes());
            let mut rows = reader.deserialize::<AccessRecord>();
            match rows.next() {
                Some(Ok(r)) => r,
                Some(Err(e)) => return Err(RecordError::MalformedLine(e.to_string())),
                None => return Err(RecordError::MalformedLine("empty line".into())),
            }
        }
        TraceFormat::Jsonl => serde_json::from_str(line.trim())
            .map_err(|e| RecordError::MalformedLine(e.to_string()))?,
    };
    record.validate()?;
    Ok(record)
}

/// Render one record as a single line without the trailing newline.
pub fn serialize_record(record: &AccessRecord, format: TraceFormat) -> String {
    match format {
        TraceFormat::Csv => {
            let mut writer = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(Vec::new());
            writer.serialize(record).expect("in-memory csv write");
            let bytes = writer.into_inner().expect("in-memory csv flush");
            let mut line = String::from_utf8(bytes).expect("csv output is utf-8");
            while line.ends_with('\n') || line.ends_with('\r') {
                line.pop();
            }
            line
        }
        TraceFormat::Jsonl => serde_json::to_string(record).expect("record serializes"),
    }
}

/// Read a whole trace. CSV input must start with the canonical header.
pub fn read_trace<R: BufRead>(reader: R, format: TraceFormat) -> Result<Vec<AccessRecord>, TraceError> {
    let mut out = Vec::new();
    let mut lines = reader.lines().enumerate();
    if format == TraceFormat::Csv {
        let header = loop {
            match lines.next() {
                Some((_, line)) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(TraceError::MissingHeader),
            }
        };
        let expected = CSV_COLUMNS.join(",");
        let found: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        if found != CSV_COLUMNS {
            return Err(TraceError::BadHeader { expected, found: header });
        }
    }
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(&line, format).map_err(|source| TraceError::Record {
            line: idx + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Write a trace, including the CSV header when applicable.
pub fn write_trace<W: Write>(
    mut writer: W,
    records: &[AccessRecord],
    format: TraceFormat,
) -> std::io::Result<()> {
    if format == TraceFormat::Csv {
        writeln!(writer, "{}", CSV_COLUMNS.join(","))?;
    }
    for record in records {
        writeln!(writer, "{}", serialize_record(record, format))?;
    }
    writer.flush()
}
