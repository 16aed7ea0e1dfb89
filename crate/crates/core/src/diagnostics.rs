//! Conserved-quantity monitors and the Noether charges of the `GL(n, ℂ)` symmetry.
//!
//! Under `ψ ↦ Lψ`, `Γ ↦ L^{-†}ΓL⁻¹` the total Lagrangian is invariant when
//! `α₅ = 0` and there is no forcing. With momenta `π`, `P` the conserved
//! tensor is `Z = (ψπᵀ − PΓ)Γ₀⁻¹`; its Hermitian and anti-Hermitian parts
//! give `V = Z + Z†` and `W = −i(Z − Z†)`.

use crate::algebra::{hermiticity_drift, CMatrix, HermitianForm, I};
use crate::canonical::legendre_regular;
use crate::error::{Error, Result};
use crate::integrate::{ChiSource, Trajectory};
use crate::models::{energy, FullState, ModelParams};

/// Relative tolerance for classifying a generator as Hermitian or anti-Hermitian.
pub const SYMMETRY_CLASS_TOL: f64 = 1e-12;

/// A labelled symmetry generator `Ã`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub label: String,
    pub matrix: CMatrix,
}

impl Generator {
    pub fn new(label: impl Into<String>, matrix: CMatrix) -> Self {
        Self { label: label.into(), matrix }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargeReport {
    pub t: f64,
    pub v: CMatrix,
    pub w: CMatrix,
    pub charges: Vec<(String, f64)>,
    pub energy: f64,
    pub theta1: f64,
    pub hermiticity_drift: f64,
}

/// Largest relative change of each monitored quantity along a trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriftSummary {
    pub energy: f64,
    pub theta1: f64,
    pub hermiticity: f64,
    /// Largest relative anti-Hermitian part of `V` or `W`.
    pub noether_hermiticity: f64,
    pub charges: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport {
    pub reports: Vec<ChargeReport>,
    pub summary: DriftSummary,
}

/// Applies `ψ ↦ Lψ`, `Γ ↦ L^{-†}ΓL⁻¹` to positions and velocities.
pub fn gl_transform(state: &FullState, l: &CMatrix) -> Result<FullState> {
    let n = state.dim();
    if l.nrows() != n || l.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: l.nrows() });
    }
    let l_inv = l.clone().try_inverse().ok_or(Error::SingularTransform)?;
    if !l_inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::SingularTransform);
    }
    let l_inv_adj = l_inv.adjoint();
    let map = |m: &CMatrix| HermitianForm::new_unchecked(&l_inv_adj * m * &l_inv);
    Ok(FullState {
        psi: l * &state.psi,
        psi_dot: l * &state.psi_dot,
        gamma: map(state.gamma.matrix()),
        gamma_dot: map(state.gamma_dot.matrix()),
        t: state.t,
    })
}

/// The Hermitian charge tensors `(V, W)` relative to the reference product `Γ₀`.
pub fn noether_tensors(state: &FullState, params: &ModelParams, gamma0: &HermitianForm) -> Result<(CMatrix, CMatrix)> {
    let n = state.dim();
    if gamma0.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: gamma0.dim() });
    }
    let k0 = gamma0.inverse()?;
    let p = legendre_regular(state, params)?;
    let z = (&state.psi * p.pi.transpose() - p.pi_gamma.matrix() * state.gamma.matrix()) * k0;
    let v = &z + z.adjoint();
    let w = (&z - z.adjoint()) * (-I);
    Ok((v, w))
}

fn charge_from(v: &CMatrix, w: &CMatrix, a_tilde: &CMatrix) -> Result<f64> {
    if a_tilde.nrows() != v.nrows() || a_tilde.ncols() != v.ncols() {
        return Err(Error::DimensionMismatch { expected: v.nrows(), found: a_tilde.nrows() });
    }
    let scale = a_tilde.norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let tol = SYMMETRY_CLASS_TOL * scale;
    if (a_tilde - a_tilde.adjoint()).norm() <= tol {
        Ok((v * a_tilde).trace().re)
    } else if (a_tilde + a_tilde.adjoint()).norm() <= tol {
        Ok((w * a_tilde * I).trace().re)
    } else {
        Err(Error::WrongSymmetryClass)
    }
}

/// `J = Tr(VÃ)` for Hermitian `Ã`, `J = Tr(iWÃ)` for anti-Hermitian `Ã`.
pub fn noether_charge(
    state: &FullState,
    params: &ModelParams,
    gamma0: &HermitianForm,
    a_tilde: &CMatrix,
) -> Result<f64> {
    let (v, w) = noether_tensors(state, params, gamma0)?;
    charge_from(&v, &w, a_tilde)
}

/// The anti-Hermitian generator `iH` of a Hermitian `H`.
pub fn antihermitian_from(h: &CMatrix) -> CMatrix {
    h * I
}

/// Full diagnostic report of one state.
pub fn charge_report(
    state: &FullState,
    params: &ModelParams,
    chi: &HermitianForm,
    gamma0: &HermitianForm,
    generators: &[Generator],
) -> Result<ChargeReport> {
    let (v, w) = noether_tensors(state, params, gamma0)?;
    let charges = generators
        .iter()
        .map(|g| Ok((g.label.clone(), charge_from(&v, &w, &g.matrix)?)))
        .collect::<Result<Vec<_>>>()?;
    let drift = hermiticity_drift(state.gamma.matrix()).max(hermiticity_drift(state.gamma_dot.matrix()));
    Ok(ChargeReport {
        t: state.t,
        v,
        w,
        charges,
        energy: energy(state, params, chi)?,
        theta1: state.theta1(),
        hermiticity_drift: drift,
    })
}

/// `max |q(t) − q(0)| / max(|q(0)|, 1e-6·scale)`, with `scale` the largest `|q|` seen.
fn relative_drift(series: impl Iterator<Item = f64> + Clone) -> f64 {
    relative_drift_above(series, 0.0)
}

/// As [`relative_drift`], with `scale` at least `floor`. Charges that vanish
/// identically would otherwise report their round-off relative to itself.
fn relative_drift_above(series: impl Iterator<Item = f64> + Clone, floor: f64) -> f64 {
    let mut it = series.clone();
    let Some(q0) = it.next() else { return 0.0 };
    let scale = series.clone().fold(floor, |m, q| m.max(q.abs()));
    let spread = series.fold(0.0f64, |m, q| m.max((q - q0).abs()));
    if spread == 0.0 {
        return 0.0;
    }
    spread / q0.abs().max(1e-6 * scale)
}

/// Evaluates energy, norm, hermiticity and every requested Noether charge at
/// each sample of `trajectory`. Without `gamma0` the initial `Γ` is used.
pub fn monitor(
    trajectory: &Trajectory,
    params: &ModelParams,
    chi: &ChiSource,
    gamma0: Option<&HermitianForm>,
    generators: &[Generator],
) -> Result<MonitorReport> {
    let first = trajectory
        .states
        .first()
        .ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
    let reference = gamma0.cloned().unwrap_or_else(|| first.gamma.clone());
    let mut reports = Vec::with_capacity(trajectory.len());
    for (k, state) in trajectory.states.iter().enumerate() {
        let mut report = charge_report(state, params, &chi.at(state.t), &reference, generators)?;
        if let Some(d) = trajectory.diagnostics.get(k) {
            report.hermiticity_drift = report.hermiticity_drift.max(d.herm_drift);
        }
        reports.push(report);
    }
    let tensor_scale = reports.iter().fold(0.0f64, |m, r| m.max(r.v.norm() + r.w.norm()));
    let summary = DriftSummary {
        energy: relative_drift(reports.iter().map(|r| r.energy)),
        theta1: relative_drift(reports.iter().map(|r| r.theta1)),
        hermiticity: reports.iter().fold(0.0, |m, r| m.max(r.hermiticity_drift)),
        noether_hermiticity: reports
            .iter()
            .fold(0.0, |m, r| m.max(hermiticity_drift(&r.v)).max(hermiticity_drift(&r.w))),
        charges: generators
            .iter()
            .enumerate()
            .map(|(j, g)| {
                let floor = tensor_scale * g.matrix.norm();
                (g.label.clone(), relative_drift_above(reports.iter().map(move |r| r.charges[j].1), floor))
            })
            .collect(),
    };
    Ok(MonitorReport { reports, summary })
}
