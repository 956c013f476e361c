//! CSV tables and content hashes. Floats are written in Rust's shortest
//! round-trip form (exponent notation for very small or large magnitudes),
//! so parsing a table gives back the exact values.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::DiagnosticsReport;
use crate::error::{Error, Result};
use crate::geometry::GeometryProfile;
use crate::sobolev::QuotientReport;
use crate::solver::RadialSolution;

pub const PROFILE_COLUMNS: [&str; 7] = ["r", "psi", "dpsi", "ddpsi", "I", "theta", "J"];
pub const SOLUTION_COLUMNS: [&str; 4] = ["r", "u", "du", "w"];
pub const TRACE_COLUMNS: [&str; 6] = ["r", "F", "P", "K", "Q", "E"];
pub const QUOTIENT_COLUMNS: [&str; 6] = ["model", "n", "p", "b", "quotient", "err"];

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidParameter(format!("csv: {e}"))
}

/// Header plus string rows, quoted where needed.
pub fn write_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn numeric_table<const N: usize>(header: &[&str; N], rows: &[[f64; N]]) -> Result<String> {
    write_table(header, rows.iter().map(|r| r.iter().map(|&v| float(v)).collect()))
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

/// Parse a table into its header and string records.
pub fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_error)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_error)?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

/// Parse an all-numeric table, checking the header.
pub fn read_numeric_table(text: &str, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = read_table(text)?;
    if header != expected {
        return Err(Error::GridMismatch(format!(
            "columns {header:?}, expected {expected:?}"
        )));
    }
    rows.into_iter()
        .map(|row| {
            row.iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("not a number: {s:?}")))
                })
                .collect()
        })
        .collect()
}

pub fn profile_csv(profile: &GeometryProfile) -> Result<String> {
    numeric_table(&PROFILE_COLUMNS, &profile.rows()?)
}

pub fn solution_csv(sol: &RadialSolution) -> Result<String> {
    numeric_table(&SOLUTION_COLUMNS, &sol.rows())
}

pub fn traces_csv(report: &DiagnosticsReport) -> Result<String> {
    numeric_table(&TRACE_COLUMNS, &report.trace_rows())
}

pub fn quotient_csv(rows: &[QuotientReport]) -> Result<String> {
    write_table(
        &QUOTIENT_COLUMNS,
        rows.iter().map(|q| {
            vec![
                q.model.clone(),
                q.n.to_string(),
                float(q.p),
                q.b.map(float).unwrap_or_default(),
                float(q.quotient),
                float(q.error),
            ]
        }),
    )
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A written artifact and its hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

impl Artifact {
    pub fn of(name: &str, content: &[u8]) -> Self {
        Self {
            name: name.into(),
            sha256: sha256_hex(content),
            bytes: content.len(),
        }
    }
}
