//! Learning-curve CSV files.
//!
//! Columns, in order: `iter, J, p_s, delta, I, lambda, grad_J_norm,
//! grad_Phi_norm, wallclock_s`. `J` is the mean discounted return over the
//! horizon (no critic tail), `delta` is the constraint error `1 - delta -
//! p_s` and `I`/`lambda` are the controller state after that iteration's
//! update. `wallclock_s` is 0 when timing was switched off.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spil_core::trainer::TrainRecord;

use crate::error::{CliError, Result};

pub const HEADER: [&str; 9] = [
    "iter",
    "J",
    "p_s",
    "delta",
    "I",
    "lambda",
    "grad_J_norm",
    "grad_Phi_norm",
    "wallclock_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub p_s: f64,
    pub delta: f64,
    #[serde(rename = "I")]
    pub integral: f64,
    pub lambda: f64,
    #[serde(rename = "grad_J_norm")]
    pub grad_j_norm: f64,
    #[serde(rename = "grad_Phi_norm")]
    pub grad_phi_norm: f64,
    pub wallclock_s: f64,
}

impl From<&TrainRecord> for CurveRow {
    fn from(r: &TrainRecord) -> Self {
        CurveRow {
            iter: r.iteration,
            j: r.j,
            p_s: r.p_s,
            delta: r.delta_err,
            integral: r.integral,
            lambda: r.lambda,
            grad_j_norm: r.grad_j_norm,
            grad_phi_norm: r.grad_phi_norm,
            wallclock_s: r.wallclock_s,
        }
    }
}

pub fn to_string(rows: &[CurveRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(HEADER).expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn parse(text: &str, origin: &Path) -> Result<Vec<CurveRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| CliError::format(origin, e.to_string()))?
        .clone();
    if header.iter().ne(HEADER) {
        return Err(CliError::format(origin, format!("unexpected header `{}`", header.as_slice())));
    }
    let rows = rdr
        .deserialize()
        .collect::<Result<Vec<CurveRow>, _>>()
        .map_err(|e| CliError::format(origin, e.to_string()))?;
    if rows.windows(2).any(|w| w[1].iter <= w[0].iter) {
        return Err(CliError::format(origin, "iteration column is not increasing"));
    }
    Ok(rows)
}

pub fn write(rows: &[CurveRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, to_string(rows)).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<CurveRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, path)
}
