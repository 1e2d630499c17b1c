//! CSV matrices and benchmark result files.
//!
//! Matrix files have no header and are row-major; values are written with
//! enough digits to read back bit-identically in their precision.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::{MPArray, Placement};
use crate::error::{Error, Result};
use crate::precision::Precision;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_field(token: &str) -> Option<f64> {
    match token.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        other => other.parse().ok(),
    }
}

/// Reads a headerless CSV matrix, rounding every value to `precision`.
///
/// Line and column numbers in errors are 1-based. An empty file is a 0 x 0
/// matrix.
pub fn read_matrix_csv(path: impl AsRef<Path>, precision: Precision) -> Result<MPArray> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(csv_err(path))?;
        let line = record
            .position()
            .map_or(rows.len() + 1, |p| p.line() as usize);
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows {
                path: path.to_path_buf(),
                line,
                expected,
                found: record.len(),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, token)| {
                parse_field(token).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: c + 1,
                    token: token.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let (r, c) = (rows.len(), width.unwrap_or(0));
    let mut values = Vec::with_capacity(r * c);
    for j in 0..c {
        values.extend(rows.iter().map(|row| row[j]));
    }
    MPArray::from_doubles(&values, r, c, precision, Placement::Cpu)
}

fn format_value(x: f64, p: Precision) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    match p {
        Precision::Double => format!("{x:.16e}"),
        Precision::Single => format!("{x:.8e}"),
        Precision::Half => format!("{x:.4e}"),
    }
}

/// Writes `a` row-major with round-trip digits (17, 9 or 5 significant).
/// A vector is written as a single column.
pub fn write_matrix_csv(path: impl AsRef<Path>, a: &MPArray) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let (rows, cols) = a.dims();
    let values = a.to_doubles();
    let p = a.precision();
    let mut line = String::new();
    for i in 0..rows {
        line.clear();
        for j in 0..cols {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format_value(values[j * rows + i], p));
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// One benchmark observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub op: String,
    pub n: usize,
    pub precision: Precision,
    pub placement: Placement,
    pub reps: usize,
    pub median_seconds: f64,
    pub rel_frob_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResultFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ResultFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ResultFormat::Csv),
            "json" => Ok(ResultFormat::Json),
            other => Err(Error::InvalidParam(format!(
                "unknown result format '{other}'"
            ))),
        }
    }
}

const RESULT_HEADER: [&str; 7] = [
    "op",
    "n",
    "precision",
    "placement",
    "reps",
    "median_seconds",
    "rel_frob_err",
];

/// Writes records as CSV (always with a header) or as a JSON array.
pub fn write_results(
    path: impl AsRef<Path>,
    records: &[BenchRecord],
    format: ResultFormat,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_results_to(BufWriter::new(file), records, format).map_err(|e| match e {
        Error::Io { source, .. } => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// [`write_results`] into any writer (errors report an empty path).
pub fn write_results_to<W: Write>(
    mut out: W,
    records: &[BenchRecord],
    format: ResultFormat,
) -> Result<()> {
    let path = Path::new("");
    match format {
        ResultFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(out);
            w.write_record(RESULT_HEADER).map_err(csv_err(path))?;
            for r in records {
                w.serialize(r).map_err(csv_err(path))?;
            }
            w.flush().map_err(io_err(path))
        }
        ResultFormat::Json => {
            serde_json::to_writer_pretty(&mut out, records)?;
            out.write_all(b"\n").map_err(io_err(path))?;
            out.flush().map_err(io_err(path))
        }
    }
}

/// Reads a results CSV written by [`write_results`].
pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    reader
        .deserialize()
        .map(|r| r.map_err(csv_err(path)))
        .collect()
}
