//! Dataset CSV files: `timestamp,<node_1>,...,<node_V>`, empty cell = missing.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeDelta};
use freqflow_core::data::RawDataset;
use freqflow_core::RealArray;

const TIMESTAMP_OUT: &str = "%Y-%m-%dT%H:%M:%S";
const TIMESTAMP_IN: [&str; 4] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("header: {0}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {line}: timestamp {found} is not after {previous}")]
    Ordering { line: u64, found: String, previous: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Schema { line: u64, expected: usize, found: usize },
    #[error(transparent)]
    Data(#[from] freqflow_core::Error),
}

/// A dataset together with its row timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedDataset {
    pub data: RawDataset,
    pub timestamps: Vec<NaiveDateTime>,
}

impl TimedDataset {
    /// Timestamps continuing `steps` intervals after the last row.
    pub fn following(&self, steps: usize) -> Vec<NaiveDateTime> {
        let last = *self.timestamps.last().expect("non-empty dataset");
        let dt = TimeDelta::minutes(i64::from(self.data.interval_minutes.max(1)));
        (1..=steps as i32).map(|k| last + dt * k).collect()
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    TIMESTAMP_IN.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_OUT).to_string()
}

/// Modal row spacing in whole minutes (0 for a single row).
fn modal_interval(ts: &[NaiveDateTime]) -> u32 {
    let mut counts: HashMap<i64, usize> = HashMap::new();
    for w in ts.windows(2) {
        *counts.entry((w[1] - w[0]).num_minutes()).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by_key(|&(d, c)| (c, std::cmp::Reverse(d)))
        .map_or(0, |(d, _)| d.clamp(0, u32::MAX as i64) as u32)
}

pub fn read_csv(reader: impl Read) -> Result<TimedDataset, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| CsvError::Header(e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(CsvError::Header("need a timestamp column and at least one node".into()));
    }
    let node_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let v = node_ids.len();
    let mut timestamps: Vec<NaiveDateTime> = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CsvError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != v + 1 {
            return Err(CsvError::Schema { line, expected: v + 1, found: rec.len() });
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| CsvError::Parse { line, msg: format!("bad timestamp {:?}", &rec[0]) })?;
        if let Some(prev) = timestamps.last() {
            if ts <= *prev {
                return Err(CsvError::Ordering { line, found: format_timestamp(&ts), previous: format_timestamp(prev) });
            }
        }
        timestamps.push(ts);
        for cell in rec.iter().skip(1) {
            let cell = cell.trim();
            values.push(if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| CsvError::Parse { line, msg: format!("bad number {cell:?}") })?
            });
        }
    }
    if timestamps.is_empty() {
        return Err(CsvError::Header("no data rows".into()));
    }
    let interval = modal_interval(&timestamps);
    let data = RawDataset::new(RealArray::new(&[timestamps.len(), v], values)?, node_ids, interval)?;
    Ok(TimedDataset { data, timestamps })
}

pub fn load_csv(path: &Path) -> Result<TimedDataset, CsvError> {
    read_csv(File::open(path)?)
}

/// Writes rows of `values` (`[T, V]`) with the given timestamps and node ids.
pub fn write_rows(writer: impl Write, node_ids: &[String], timestamps: &[NaiveDateTime], values: &RealArray) -> Result<(), CsvError> {
    let (t, v) = values.rows_cols();
    if t != timestamps.len() || v != node_ids.len() {
        return Err(CsvError::Header(format!("{t} x {v} values for {} timestamps and {} nodes", timestamps.len(), node_ids.len())));
    }
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| CsvError::Io(e.into());
    w.write_record(std::iter::once("timestamp").chain(node_ids.iter().map(String::as_str))).map_err(io)?;
    for (r, ts) in timestamps.iter().enumerate() {
        let row = values.row(r).iter().map(|x| if x.is_nan() { String::new() } else { x.to_string() });
        w.write_record(std::iter::once(format_timestamp(ts)).chain(row)).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(ds: &TimedDataset, writer: impl Write) -> Result<(), CsvError> {
    write_rows(writer, &ds.data.node_ids, &ds.timestamps, &ds.data.values)
}

pub fn save_csv(ds: &TimedDataset, path: &Path) -> Result<(), CsvError> {
    write_csv(ds, File::create(path)?)
}
