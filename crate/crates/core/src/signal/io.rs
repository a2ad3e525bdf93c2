//! On-disk formats for raw 6-channel recordings and their labels.
//!
//! Two interchangeable raw formats, selected by file extension:
//!
//! * `.csv` — header `t,ax,ay,az,gx,gy,gz`, one row per sample. Values are
//!   printed with Rust's shortest-roundtrip float formatting, so a write/read
//!   cycle is bit-exact.
//! * `.bin` — `IMUBIN01` magic, little-endian u64 sample count, then the six
//!   channels channel-major as little-endian f64.
//!
//! Labels live in a JSON-lines file, one record per labeled span with times
//! in seconds. Sample indices are recovered by rounding `t * sample_rate`.

use super::channels::{derive_channels, ActionSpan, ChannelizedSequence};
use crate::error::CoreError;
use crate::taxonomy::{ActionClass, Scenario};
use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const BIN_MAGIC: &[u8; 8] = b"IMUBIN01";
const CSV_HEADER: &str = "t,ax,ay,az,gx,gy,gz";

/// One labeled span of one video, as serialized to the labels file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub video_id: String,
    pub scenario: String,
    pub start_s: f64,
    pub end_s: f64,
    pub action: String,
    pub weight: f64,
}

fn io_err(path: &Path, source: std::io::Error) -> CoreError {
    CoreError::io(path.display().to_string(), source)
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CoreError {
    CoreError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Write a 6×T raw recording as CSV with a time column at `sample_rate`.
pub fn write_raw_csv(
    path: &Path,
    raw: ArrayView2<f64>,
    sample_rate: f64,
) -> Result<(), CoreError> {
    check_raw_shape(raw)?;
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let inner = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for t in 0..raw.ncols() {
            write!(w, "{}", t as f64 / sample_rate)?;
            for c in 0..6 {
                write!(w, ",{}", raw[[c, t]])?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    inner(&mut w).map_err(|e| io_err(path, e))
}

/// Read a CSV recording back as a 6×T array (the time column is discarded).
pub fn read_raw_csv(path: &Path) -> Result<Array2<f64>, CoreError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut columns: Vec<[f64; 6]> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let lineno = i + 1;
        if i == 0 {
            if line.trim() != CSV_HEADER {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("expected header {CSV_HEADER:?}, got {:?}", line.trim()),
                ));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        let mut row = [0.0; 6];
        for (f, field) in fields.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(path, lineno, format!("field {}: bad float {field:?}", f + 1))
            })?;
            if f > 0 {
                row[f - 1] = v;
            }
        }
        columns.push(row);
    }
    columns_to_raw(path, columns)
}

/// Write a 6×T raw recording in the binary format.
pub fn write_raw_bin(path: &Path, raw: ArrayView2<f64>) -> Result<(), CoreError> {
    check_raw_shape(raw)?;
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let inner = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(BIN_MAGIC)?;
        w.write_all(&(raw.ncols() as u64).to_le_bytes())?;
        for c in 0..6 {
            for t in 0..raw.ncols() {
                w.write_all(&raw[[c, t]].to_le_bytes())?;
            }
        }
        w.flush()
    };
    inner(&mut w).map_err(|e| io_err(path, e))
}

/// Read a binary recording back as a 6×T array.
pub fn read_raw_bin(path: &Path) -> Result<Array2<f64>, CoreError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != BIN_MAGIC {
        return Err(parse_err(path, 1, "missing IMUBIN01 magic"));
    }
    let t = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = 16 + 6 * t * 8;
    if bytes.len() != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected {expected} bytes for {t} samples, got {}", bytes.len()),
        ));
    }
    let mut raw = Array2::zeros((6, t));
    for c in 0..6 {
        for i in 0..t {
            let off = 16 + (c * t + i) * 8;
            raw[[c, i]] = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        }
    }
    Ok(raw)
}

/// Read a raw recording, dispatching on the file extension.
pub fn read_raw(path: &Path) -> Result<Array2<f64>, CoreError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_raw_csv(path),
        Some("bin") => read_raw_bin(path),
        other => Err(CoreError::InvalidData(format!(
            "unsupported raw extension {other:?} for {}",
            path.display()
        ))),
    }
}

/// Write a raw recording, dispatching on the file extension.
pub fn write_raw(path: &Path, raw: ArrayView2<f64>, sample_rate: f64) -> Result<(), CoreError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => write_raw_csv(path, raw, sample_rate),
        Some("bin") => write_raw_bin(path, raw),
        other => Err(CoreError::InvalidData(format!(
            "unsupported raw extension {other:?} for {}",
            path.display()
        ))),
    }
}

/// Append-order-preserving JSON-lines label writer.
pub fn write_labels(path: &Path, records: &[LabelRecord]) -> Result<(), CoreError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    for rec in records {
        let line = serde_json::to_string(rec)
            .map_err(|e| CoreError::InvalidData(format!("label serialization: {e}")))?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, CoreError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord = serde_json::from_str(&line)
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        records.push(rec);
    }
    Ok(records)
}

/// Convert one sequence's spans into label records (times in seconds).
pub fn spans_to_records(seq: &ChannelizedSequence) -> Vec<LabelRecord> {
    seq.action_spans
        .iter()
        .map(|span| LabelRecord {
            video_id: seq.video_id.clone(),
            scenario: seq.scenario.name().to_string(),
            start_s: span.start as f64 / seq.sample_rate,
            end_s: span.end as f64 / seq.sample_rate,
            action: span.action.name().to_string(),
            weight: span.weight,
        })
        .collect()
}

/// Assemble a channelized sequence from a raw 6×T recording and the label
/// records belonging to it. Span times are snapped to sample indices by
/// rounding; every record must agree on the scenario.
pub fn build_sequence(
    video_id: &str,
    sample_rate: f64,
    raw: &Array2<f64>,
    records: &[LabelRecord],
) -> Result<ChannelizedSequence, CoreError> {
    if records.is_empty() {
        return Err(CoreError::InvalidData(format!(
            "no label records for video {video_id}"
        )));
    }
    let scenario = Scenario::parse(&records[0].scenario)?;
    let t_total = raw.ncols();
    let mut action_spans = Vec::with_capacity(records.len());
    for rec in records {
        if Scenario::parse(&rec.scenario)? != scenario {
            return Err(CoreError::InvalidData(format!(
                "video {video_id} labeled with conflicting scenarios {} and {}",
                records[0].scenario, rec.scenario
            )));
        }
        let start = (rec.start_s * sample_rate).round() as isize;
        let end = (rec.end_s * sample_rate).round() as isize;
        if start < 0 || end <= start || end as usize > t_total {
            return Err(CoreError::InvalidData(format!(
                "video {video_id}: span [{}, {})s maps to samples [{start}, {end}) \
                 outside 0..{t_total}",
                rec.start_s, rec.end_s
            )));
        }
        action_spans.push(ActionSpan {
            start: start as usize,
            end: end as usize,
            action: ActionClass::parse(&rec.action)?,
            weight: rec.weight,
        });
    }
    action_spans.sort_by_key(|s| s.start);
    let channels = derive_channels(raw.slice(s![0..3, ..]), raw.slice(s![3..6, ..]))?;
    Ok(ChannelizedSequence {
        video_id: video_id.to_string(),
        scenario,
        sample_rate,
        channels,
        action_spans,
    })
}

fn check_raw_shape(raw: ArrayView2<f64>) -> Result<(), CoreError> {
    if raw.nrows() != 6 {
        return Err(CoreError::shape(
            "raw recording",
            "6 channels",
            format!("{} channels", raw.nrows()),
        ));
    }
    Ok(())
}

fn columns_to_raw(path: &Path, columns: Vec<[f64; 6]>) -> Result<Array2<f64>, CoreError> {
    if columns.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    let mut raw = Array2::zeros((6, columns.len()));
    for (t, row) in columns.iter().enumerate() {
        for c in 0..6 {
            raw[[c, t]] = row[c];
        }
    }
    Ok(raw)
}
