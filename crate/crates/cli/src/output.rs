//! CSV and JSON-lines writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hermiton::algebra::{CMatrix, CVector, RMatrix};
use hermiton::diagnostics::{ChargeReport, DriftSummary};
use hermiton::integrate::Trajectory;
use serde::Serialize;

use crate::error::CliError;
use crate::scenario::Complex;

pub fn complex_vector(v: &CVector) -> Vec<Complex> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn complex_matrix(m: &CMatrix) -> Vec<Vec<Complex>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn real_matrix(m: &RMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for a in 1..=n {
        h.push(format!("Re(psi_{a})"));
        h.push(format!("Im(psi_{a})"));
    }
    for a in 1..=n {
        for b in 1..=n {
            h.push(format!("Re(G_{a}{b})"));
            h.push(format!("Im(G_{a}{b})"));
        }
    }
    h.extend(["energy", "theta1", "herm_drift"].map(String::from));
    h
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let n = traj.states.first().map_or(0, |s| s.dim());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trajectory_header(n))?;
    for ((t, s), d) in traj.times.iter().zip(&traj.states).zip(&traj.diagnostics) {
        let mut row = vec![t.to_string()];
        for z in s.psi.iter() {
            row.push(z.re.to_string());
            row.push(z.im.to_string());
        }
        let g = s.gamma.matrix();
        for a in 0..n {
            for b in 0..n {
                row.push(g[(a, b)].re.to_string());
                row.push(g[(a, b)].im.to_string());
            }
        }
        row.extend([d.energy, d.theta1, d.herm_drift].map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON document per line.
pub fn write_json_lines<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct DiagnosticsLine {
    pub kind: &'static str,
    pub t: f64,
    pub energy: f64,
    pub theta1: f64,
    pub herm_drift: f64,
}

pub fn diagnostics_lines(traj: &Trajectory) -> Vec<DiagnosticsLine> {
    traj.times
        .iter()
        .zip(&traj.diagnostics)
        .map(|(t, d)| DiagnosticsLine { kind: "sample", t: *t, energy: d.energy, theta1: d.theta1, herm_drift: d.herm_drift })
        .collect()
}

#[derive(Serialize)]
pub struct Charge {
    pub label: String,
    pub value: f64,
}

fn charges_of(pairs: &[(String, f64)]) -> Vec<Charge> {
    pairs.iter().map(|(label, value)| Charge { label: label.clone(), value: *value }).collect()
}

#[derive(Serialize)]
pub struct ChargeLine {
    pub kind: &'static str,
    pub t: f64,
    pub charges: Vec<Charge>,
    pub energy: f64,
    pub theta1: f64,
    pub hermiticity_drift: f64,
    #[serde(rename = "V")]
    pub v: Vec<Vec<Complex>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<Complex>>,
}

impl From<&ChargeReport> for ChargeLine {
    fn from(r: &ChargeReport) -> Self {
        Self {
            kind: "sample",
            t: r.t,
            charges: charges_of(&r.charges),
            energy: r.energy,
            theta1: r.theta1,
            hermiticity_drift: r.hermiticity_drift,
            v: complex_matrix(&r.v),
            w: complex_matrix(&r.w),
        }
    }
}

/// Relative drifts over the whole run.
#[derive(Serialize)]
pub struct DriftLine {
    pub kind: &'static str,
    pub energy: f64,
    pub theta1: f64,
    pub hermiticity: f64,
    pub noether_hermiticity: f64,
    pub charges: Vec<Charge>,
}

impl From<&DriftSummary> for DriftLine {
    fn from(s: &DriftSummary) -> Self {
        Self {
            kind: "summary",
            energy: s.energy,
            theta1: s.theta1,
            hermiticity: s.hermiticity,
            noether_hermiticity: s.noether_hermiticity,
            charges: charges_of(&s.charges),
        }
    }
}
