// SPDX-License-Identifier: Apache-2.0

//! Time-stamp records and the on-disk trace format.
//!
//! A trace file is UTF-8 CSV preceded by one `#meta <json>` line:
//!
//! ```text
//! #meta {"schema_version":1,"seed":7,"config_hash":"…"}
//! unit_id,k,trigger,true_t,arrival_t,gamma_c_rx,gamma_c_tx,gamma_p
//! 0,0,time,1,1.1,1.1,,1
//! ```
//!
//! `true_t` and `arrival_t` are the ground-truth sidecar; they are either
//! present on every row or on none. Times are written as the shortest decimal
//! that parses back to the same `f64`, so a write/read cycle is bit-exact.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::estimator::EstimatorConfig;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

pub const TRACE_COLUMNS: [&str; 8] = [
    "unit_id",
    "k",
    "trigger",
    "true_t",
    "arrival_t",
    "gamma_c_rx",
    "gamma_c_tx",
    "gamma_p",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Time,
    Command,
    Event,
    Random,
}

impl TriggerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TriggerKind::Time => "time",
            TriggerKind::Command => "command",
            TriggerKind::Event => "event",
            TriggerKind::Random => "random",
        }
    }
}

impl fmt::Display for TriggerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TriggerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time" => Ok(TriggerKind::Time),
            "command" => Ok(TriggerKind::Command),
            "event" => Ok(TriggerKind::Event),
            "random" => Ok(TriggerKind::Random),
            other => Err(format!("unknown trigger kind `{other}`")),
        }
    }
}

/// Observable part of one timing event: what the estimators get to see.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampRecord {
    pub unit_id: u32,
    pub k: u64,
    pub trigger: TriggerKind,
    /// Central clock reading when the report arrived.
    pub gamma_c_rx: Option<f64>,
    /// Central clock reading when the command was sent.
    pub gamma_c_tx: Option<f64>,
    /// Peripheral clock reading taken at the event.
    pub gamma_p: Option<f64>,
}

impl StampRecord {
    /// Weighted mean of the available central stamps (`w_tx` weights the
    /// transmit stamp when both exist).
    pub fn central_stamp(&self, w_tx: f64) -> Option<f64> {
        match (self.gamma_c_tx, self.gamma_c_rx) {
            (Some(tx), Some(rx)) => Some(w_tx * tx + (1.0 - w_tx) * rx),
            (Some(tx), None) => Some(tx),
            (None, Some(rx)) => Some(rx),
            (None, None) => None,
        }
    }
}

/// Ground truth for one record, kept apart from the observable stamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    /// Physical instant of the measurement or actuation.
    pub true_t: f64,
    /// Physical instant at which the central unit learned of the event.
    pub arrival_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    /// Estimator model configuration resolved when the trace was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorConfig>,
}

impl TraceMeta {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        TraceMeta {
            schema_version: TRACE_SCHEMA_VERSION,
            seed,
            config_hash: config_hash.into(),
            estimator: None,
        }
    }
}

impl Default for TraceMeta {
    fn default() -> Self {
        TraceMeta::new(0, "")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub meta: TraceMeta,
    /// Records in order of arrival at the central unit.
    pub records: Vec<StampRecord>,
    /// One entry per record when ground truth is known.
    pub truth: Option<Vec<GroundTruth>>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported trace schema version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("ground truth has {truth} entries for {records} records")]
    TruthLength { truth: usize, records: usize },
}

fn malformed(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Malformed {
        line,
        message: message.into(),
    }
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Copy of the trace with the ground-truth sidecar removed.
    pub fn without_truth(&self) -> Trace {
        Trace {
            meta: self.meta.clone(),
            records: self.records.clone(),
            truth: None,
        }
    }

    /// Copy of the trace with every peripheral stamp dropped.
    pub fn without_peripheral_stamps(&self) -> Trace {
        let mut out = self.clone();
        for r in &mut out.records {
            r.gamma_p = None;
        }
        out
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), TraceError> {
        if let Some(truth) = &self.truth {
            if truth.len() != self.records.len() {
                return Err(TraceError::TruthLength {
                    truth: truth.len(),
                    records: self.records.len(),
                });
            }
        }
        let mut out = BufWriter::new(out);
        write_meta_line(&mut out, &self.meta)?;
        let mut w = csv::WriterBuilder::new().from_writer(out);
        w.write_record(TRACE_COLUMNS).map_err(csv_io)?;
        for (i, r) in self.records.iter().enumerate() {
            let truth = self.truth.as_ref().map(|t| t[i]);
            w.write_record([
                r.unit_id.to_string(),
                r.k.to_string(),
                r.trigger.to_string(),
                fmt_opt(truth.map(|g| g.true_t)),
                fmt_opt(truth.map(|g| g.arrival_t)),
                fmt_opt(r.gamma_c_rx),
                fmt_opt(r.gamma_c_tx),
                fmt_opt(r.gamma_p),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Trace, TraceError> {
        let mut input = BufReader::new(input);
        let meta: TraceMeta = read_meta_line(&mut input)?;
        if meta.schema_version != TRACE_SCHEMA_VERSION {
            return Err(TraceError::VersionMismatch {
                found: meta.schema_version,
                expected: TRACE_SCHEMA_VERSION,
            });
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let headers = rdr.headers().map_err(|e| malformed(2, e.to_string()))?;
        if headers.iter().ne(TRACE_COLUMNS.iter().copied()) {
            return Err(malformed(
                2,
                format!(
                    "expected header `{}`, found `{}`",
                    TRACE_COLUMNS.join(","),
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }
        let mut records = Vec::new();
        let mut truth = Vec::new();
        let mut truth_rows = 0usize;
        for (i, row) in rdr.records().enumerate() {
            let line = i + 3;
            let row = row.map_err(|e| malformed(line, e.to_string()))?;
            if row.len() != TRACE_COLUMNS.len() {
                return Err(malformed(
                    line,
                    format!("expected 8 fields, found {}", row.len()),
                ));
            }
            let unit_id = row[0]
                .parse()
                .map_err(|_| malformed(line, format!("bad unit_id `{}`", &row[0])))?;
            let k = row[1]
                .parse()
                .map_err(|_| malformed(line, format!("bad k `{}`", &row[1])))?;
            let trigger = row[2].parse().map_err(|e: String| malformed(line, e))?;
            let true_t = parse_opt(&row[3], "true_t", line)?;
            let arrival_t = parse_opt(&row[4], "arrival_t", line)?;
            match (true_t, arrival_t) {
                (Some(true_t), Some(arrival_t)) => {
                    truth_rows += 1;
                    truth.push(GroundTruth { true_t, arrival_t });
                }
                (None, None) => {}
                _ => {
                    return Err(malformed(
                        line,
                        "true_t and arrival_t must be given together",
                    ))
                }
            }
            records.push(StampRecord {
                unit_id,
                k,
                trigger,
                gamma_c_rx: parse_opt(&row[5], "gamma_c_rx", line)?,
                gamma_c_tx: parse_opt(&row[6], "gamma_c_tx", line)?,
                gamma_p: parse_opt(&row[7], "gamma_p", line)?,
            });
        }
        let truth = if records.is_empty() || truth_rows == 0 {
            None
        } else if truth_rows == records.len() {
            Some(truth)
        } else {
            return Err(TraceError::TruthLength {
                truth: truth_rows,
                records: records.len(),
            });
        };
        Ok(Trace {
            meta,
            records,
            truth,
        })
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        self.write(File::create(path)?)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
        Trace::read(File::open(path)?)
    }
}

fn csv_io(e: csv::Error) -> TraceError {
    TraceError::Io(std::io::Error::other(e))
}

/// Shortest round-trip decimal representation.
pub fn fmt_time(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_time).unwrap_or_default()
}

fn parse_opt(cell: &str, column: &str, line: usize) -> Result<Option<f64>, TraceError> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| malformed(line, format!("bad {column} `{cell}`")))
}

/// Write a `#meta <json>` line.
pub fn write_meta_line<W: Write, T: Serialize>(out: &mut W, meta: &T) -> Result<(), TraceError> {
    let json = serde_json::to_string(meta).map_err(std::io::Error::other)?;
    writeln!(out, "#meta {json}")?;
    Ok(())
}

/// Parse the leading `#meta <json>` line.
pub fn read_meta_line<R: BufRead, T: for<'de> Deserialize<'de>>(
    input: &mut R,
) -> Result<T, TraceError> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let json = first
        .trim_end()
        .strip_prefix("#meta ")
        .ok_or_else(|| malformed(1, "missing `#meta` line"))?;
    serde_json::from_str(json).map_err(|e| malformed(1, format!("bad meta JSON: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        Trace {
            meta: TraceMeta::new(42, "abc"),
            records: vec![
                StampRecord {
                    unit_id: 0,
                    k: 0,
                    trigger: TriggerKind::Time,
                    gamma_c_rx: Some(1.1),
                    gamma_c_tx: None,
                    gamma_p: Some(1.0),
                },
                StampRecord {
                    unit_id: 1,
                    k: 0,
                    trigger: TriggerKind::Command,
                    gamma_c_rx: Some(1.5),
                    gamma_c_tx: Some(1.0),
                    gamma_p: None,
                },
                StampRecord {
                    unit_id: 0,
                    k: 1,
                    trigger: TriggerKind::Time,
                    gamma_c_rx: Some(0.1 + 0.2),
                    gamma_c_tx: None,
                    gamma_p: Some(-1e-300),
                },
            ],
            truth: Some(vec![
                GroundTruth {
                    true_t: 1.0,
                    arrival_t: 1.1,
                },
                GroundTruth {
                    true_t: 1.2,
                    arrival_t: 1.5,
                },
                GroundTruth {
                    true_t: 2.0,
                    arrival_t: f64::from_bits(2.1f64.to_bits() + 1),
                },
            ]),
        }
    }

    fn roundtrip(t: &Trace) -> Trace {
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        Trace::read(buf.as_slice()).unwrap()
    }

    #[test]
    fn empty_trace_is_header_only() {
        let t = Trace::default();
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap() == TRACE_COLUMNS.join(","));
        assert_eq!(Trace::read(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn three_records_roundtrip_bit_exact() {
        let t = sample();
        let back = roundtrip(&t);
        assert_eq!(back, t);
        let a = back.records[2].gamma_c_rx.unwrap();
        assert_eq!(a.to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn absent_optionals_stay_absent() {
        let t = sample().without_truth();
        let back = roundtrip(&t);
        assert!(back.truth.is_none());
        assert_eq!(back.records[0].gamma_c_tx, None);
        assert_eq!(back.records[1].gamma_p, None);
    }

    #[test]
    fn version_mismatch_rejected() {
        let text = "#meta {\"schema_version\":9,\"seed\":0,\"config_hash\":\"\"}\nunit_id,k,trigger,true_t,arrival_t,gamma_c_rx,gamma_c_tx,gamma_p\n";
        assert!(matches!(
            Trace::read(text.as_bytes()),
            Err(TraceError::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "#meta {\"schema_version\":1,\"seed\":0,\"config_hash\":\"\"}\nunit_id,k,trigger,true_t,arrival_t,gamma_c_rx,gamma_c_tx,gamma_p\n0,0,sometimes,,,1,,\n";
        match Trace::read(text.as_bytes()) {
            Err(TraceError::Malformed { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("sometimes"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(Trace::read("unit_id,k\n".as_bytes()).is_err());
        let partial = "#meta {\"schema_version\":1,\"seed\":0,\"config_hash\":\"\"}\nunit_id,k,trigger,true_t,arrival_t,gamma_c_rx,gamma_c_tx,gamma_p\n0,0,time,1,,1,,\n";
        assert!(Trace::read(partial.as_bytes()).is_err());
    }

    #[test]
    fn central_stamp_mean() {
        let r = sample().records[1];
        assert_eq!(r.central_stamp(0.5), Some(1.25));
    }
}
