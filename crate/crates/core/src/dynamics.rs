//! Euler–Lagrange residuals and explicit right-hand sides for every model tier.
//!
//! Residuals follow the standard sign `δI/δq = ∂L/∂q − d/dt ∂L/∂q̇`, so they
//! agree with finite-difference gradients of the discretized action. The
//! wave-function residual is the derivative with respect to `ψ̄`; the
//! scalar-product residual is the contravariant matrix `R` with
//! `δI = Tr(R δΓ)`.

use crate::algebra::{c, CMatrix, CVector, HermitianForm, I};
use crate::error::{Error, Result};
use crate::models::{effective_operator, FullState, Kinetic, ModelParams};

/// Euler–Lagrange residuals at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    /// `δI/δψ̄`; the residual of the conjugate variation is its conjugate.
    pub r_psi: CVector,
    /// `δI/δΓ` in the trace pairing; Hermitian.
    pub r_gamma: CMatrix,
}

impl Residual {
    pub fn norm(&self) -> f64 {
        (self.r_psi.norm_squared() + self.r_gamma.norm_squared()).sqrt()
    }
}

fn check_dims(state: &FullState, chi: &HermitianForm) -> Result<()> {
    let n = state.dim();
    for found in [state.psi.len(), state.psi_dot.len(), state.gamma_dot.dim(), chi.dim()] {
        if found != n {
            return Err(Error::DimensionMismatch { expected: n, found });
        }
    }
    Ok(())
}

fn conj_forcing(state: &FullState, params: &ModelParams) -> Result<Option<CVector>> {
    Ok(params.forcing_at(state.t, state.dim())?.map(|f| f.conjugate()))
}

/// `ψ̇ = (γ / 2iα) Γ⁻¹χ ψ`.
pub fn rhs_schrodinger(
    psi: &CVector,
    gamma: &HermitianForm,
    chi: &HermitianForm,
    alpha: f64,
    gamma_coeff: f64,
) -> Result<CVector> {
    if alpha == 0.0 {
        return Err(Error::ZeroAlpha1);
    }
    let h = crate::algebra::raise_first_index(gamma, chi)?;
    Ok(h.matrix() * psi * (c(gamma_coeff) / (I * 2.0 * alpha)))
}

/// First-order flow with a potential of `θ₁`, frozen `Γ`:
/// `2iα ψ̇ = Γ⁻¹(γχψ + V′Γψ − F̄)`.
pub fn rhs_direct_nonlinear(
    psi: &CVector,
    gamma: &HermitianForm,
    chi: &HermitianForm,
    params: &ModelParams,
    t: f64,
) -> Result<CVector> {
    if params.alpha1 == 0.0 {
        return Err(Error::ZeroAlpha1);
    }
    let n = gamma.dim();
    if chi.dim() != n || psi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: chi.dim().max(psi.len()) });
    }
    let g = gamma.matrix();
    let theta1 = gamma.quadratic(psi);
    let mut force = chi.matrix() * psi * c(params.gamma()) + g * psi * c(params.potential_derivative(theta1));
    if let Some(f) = params.forcing_at(t, n)? {
        force -= f.conjugate();
    }
    Ok(gamma.inverse()? * force / (I * 2.0 * params.alpha1))
}

/// `ψ̈` of the second-order model with frozen `Γ`, solved from
/// `2iαΓψ̇ − βΓ̃ψ̈ − γχψ + α₄Γψ − V′Γψ + F̄ = 0`. Without `Γ̃`, `Γ̃ = Γ`.
pub fn rhs_second_order(
    state: &FullState,
    chi: &HermitianForm,
    params: &ModelParams,
    gamma_tilde: Option<&HermitianForm>,
) -> Result<CVector> {
    if params.alpha2 == 0.0 {
        return Err(Error::ZeroBeta);
    }
    check_dims(state, chi)?;
    let g = state.gamma.matrix();
    let psi = &state.psi;
    let theta1 = state.theta1();
    let mut rest = g * &state.psi_dot * (I * 2.0 * params.alpha1);
    rest += (g.scale(params.alpha4 - params.potential_derivative(theta1))
        + chi.matrix().scale(params.alpha5))
        * psi;
    if let Some(f) = conj_forcing(state, params)? {
        rest += f;
    }
    let kinetic = match gamma_tilde {
        Some(gt) => {
            if gt.dim() != state.dim() {
                return Err(Error::DimensionMismatch { expected: state.dim(), found: gt.dim() });
            }
            gt.inverse()?
        }
        None => state.gamma.inverse()?,
    };
    Ok(kinetic * rest / c(params.alpha2))
}

/// `r_ψ` without the `−α₂Γψ̈` term.
fn psi_residual_rest(state: &FullState, params: &ModelParams, chi: &HermitianForm) -> Result<CVector> {
    let g = state.gamma.matrix();
    let d = state.gamma_dot.matrix();
    let v = &state.psi_dot;
    let op = effective_operator(state, params, chi, c(params.alpha3 * params.alpha9))?;
    let mut r = g * v * (I * 2.0 * params.alpha1) + op * &state.psi - d * v * c(params.alpha2);
    if let Some(f) = conj_forcing(state, params)? {
        r += f;
    }
    Ok(r)
}

/// `r_Γ` without the `−2Ω(Γ̈)` term.
fn gamma_residual_rest(state: &FullState, params: &ModelParams, kin: &Kinetic) -> CMatrix {
    let psi = &state.psi;
    let v = &state.psi_dot;
    let d = state.gamma_dot.matrix();
    let vp = v * psi.adjoint();
    let pv = psi * v.adjoint();
    let mut r = (&vp - &pv) * (I * params.alpha1);
    r += (v * v.adjoint()).scale(params.alpha2);
    r += kin.rho.scale(params.alpha4 - params.potential_derivative(kin.theta1));
    r -= (&vp + &pv).scale(params.alpha3 * params.alpha9);
    let tr_md = (&kin.m * d).trace();
    let inner = (d * &kin.m * d).scale(params.alpha6) + d * (c(params.alpha7) * tr_md);
    r -= (&kin.k * inner * &kin.k).scale(2.0);
    r -= kin.omega_rate(d, v, d).scale(2.0);
    r
}

/// Both Euler–Lagrange residuals for given accelerations.
pub fn el_residual(
    state: &FullState,
    psi_ddot: &CVector,
    gamma_ddot: &CMatrix,
    params: &ModelParams,
    chi: &HermitianForm,
) -> Result<Residual> {
    check_dims(state, chi)?;
    let kin = Kinetic::new(&state.psi, &state.gamma, params)?;
    let g = state.gamma.matrix();
    let r_psi = psi_residual_rest(state, params, chi)? - g * psi_ddot * c(params.alpha2);
    let r_gamma = gamma_residual_rest(state, params, &kin) - kin.omega(gamma_ddot).scale(2.0);
    Ok(Residual { r_psi, r_gamma })
}

/// Applies `Ω⁻¹`, using the closed form when available and a direct solve otherwise.
pub(crate) fn solve_kinetic(
    kin: &Kinetic,
    psi: &CVector,
    gamma: &HermitianForm,
    params: &ModelParams,
    y: &CMatrix,
) -> Result<CMatrix> {
    match kin.omega_inverse(y) {
        Err(Error::DegenerateKinetic(reason)) => {
            let t = crate::oracles::omega_inverse_numeric(psi, gamma, params).map_err(
                |e| match e {
                    Error::SingularOperator => Error::DegenerateKinetic(reason),
                    other => other,
                },
            )?;
            Ok(t.apply(y))
        }
        other => other,
    }
}

/// Accelerations `(ψ̈, Γ̈)` of the total Lagrangian.
pub fn rhs_full(state: &FullState, params: &ModelParams, chi: &HermitianForm) -> Result<(CVector, CMatrix)> {
    if params.alpha2 == 0.0 {
        return Err(Error::ZeroAlpha2);
    }
    check_dims(state, chi)?;
    let kin = Kinetic::new(&state.psi, &state.gamma, params)?;
    let psi_ddot = &kin.k * psi_residual_rest(state, params, chi)? / c(params.alpha2);
    let rest = gamma_residual_rest(state, params, &kin);
    let gamma_ddot = solve_kinetic(&kin, &state.psi, &state.gamma, params, &rest)?.scale(0.5);
    Ok((psi_ddot, gamma_ddot))
}

/// First-order (`α₂ = 0`) model: `ψ̇` from the effective Hamilton operator,
/// `Γ̈` from the scalar-product equation. `state.psi_dot` is ignored.
pub fn rhs_modified_first_order(
    state: &FullState,
    params: &ModelParams,
    chi: &HermitianForm,
) -> Result<(CVector, CMatrix)> {
    if params.alpha2 != 0.0 {
        return Err(Error::InvalidInput(
            "the modified first-order model requires alpha2 = 0".into(),
        ));
    }
    if params.alpha1 == 0.0 {
        return Err(Error::ZeroAlpha1);
    }
    check_dims(state, chi)?;
    let psi_dot = first_order_velocity(state, params, chi)?;
    let mut moving = state.clone();
    moving.psi_dot = psi_dot.clone();
    let kin = Kinetic::new(&state.psi, &state.gamma, params)?;
    let rest = gamma_residual_rest(&moving, params, &kin);
    let gamma_ddot = solve_kinetic(&kin, &moving.psi, &moving.gamma, params, &rest)?.scale(0.5);
    Ok((psi_dot, gamma_ddot))
}

/// `ψ̇ = (i/2α₁) Γ⁻¹ (Oψ + F̄)` where `iħψ̇ = H_eff ψ` in the absence of forcing.
fn first_order_velocity(state: &FullState, params: &ModelParams, chi: &HermitianForm) -> Result<CVector> {
    let op = effective_operator(state, params, chi, c(params.alpha3 * params.alpha9))?;
    let mut rhs = op * &state.psi;
    if let Some(f) = conj_forcing(state, params)? {
        rhs += f;
    }
    Ok(state.gamma.inverse()? * rhs * (I / (2.0 * params.alpha1)))
}

/// Geodesic acceleration of the scalar-product kinetic model with couplings
/// `A`, `B`: `Γ̈ = Γ̇ Γ⁻¹ Γ̇`, which does not depend on `B`.
pub fn rhs_gamma_geodesic(gamma: &HermitianForm, gamma_dot: &HermitianForm, a: f64, b: f64) -> Result<CMatrix> {
    let n = gamma.dim();
    if gamma_dot.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: gamma_dot.dim() });
    }
    if a.abs() <= crate::models::DENOMINATOR_EPS {
        return Err(Error::DegenerateKinetic("A vanishes".into()));
    }
    if (a + n as f64 * b).abs() <= crate::models::DENOMINATOR_EPS {
        return Err(Error::DegenerateKinetic(format!("A + nB vanishes (A = {a}, B = {b}, n = {n})")));
    }
    let d = gamma_dot.matrix();
    Ok(d * gamma.inverse()? * d)
}

/// `ψ̇` of the first-order model, exposed for diagnostics and tests.
pub fn modified_first_order_velocity(
    state: &FullState,
    params: &ModelParams,
    chi: &HermitianForm,
) -> Result<CVector> {
    if params.alpha1 == 0.0 {
        return Err(Error::ZeroAlpha1);
    }
    check_dims(state, chi)?;
    first_order_velocity(state, params, chi)
}
