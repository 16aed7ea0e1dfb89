//! Legendre transformations, Hamiltonians and the constraint analysis of
//! the velocity-linear models.
//!
//! Momenta: `π_b = ∂L/∂ψ̇^b` is stored as a vector; its conjugate is never
//! stored. For the scalar product, `P = ∂L/∂Γ̇` is the Hermitian matrix with
//! `δL = Tr(P δΓ̇)`.

use nalgebra::Cholesky;

use crate::algebra::{
    c, gradient_from_directional, hermitian_basis, real_decompose, CMatrix, CVector, HermitianForm,
    RMatrix, C64, I,
};
use crate::dynamics::{rhs_full, rhs_second_order};
use crate::error::{Error, Result};
use crate::models::{potential_gradient, FullState, Kinetic, ModelParams, PotentialSpec};

/// Canonical variables `(ψ, π, Γ, P)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub psi: CVector,
    pub pi: CVector,
    pub gamma: HermitianForm,
    pub pi_gamma: HermitianForm,
    pub t: f64,
}

impl PhasePoint {
    pub fn dim(&self) -> usize {
        self.gamma.dim()
    }

    pub fn pi_bar(&self) -> CVector {
        self.pi.conjugate()
    }
}

/// Values of the primary constraints `φ_a = π_a − iα Γ_b̄a ψ̄^b̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintValue {
    pub phi: CVector,
}

impl ConstraintValue {
    pub fn phi_bar(&self) -> CVector {
        self.phi.conjugate()
    }

    pub fn norm(&self) -> f64 {
        self.phi.norm()
    }
}

/// Time derivatives of all canonical variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFlow {
    pub psi_dot: CVector,
    pub pi_dot: CVector,
    pub gamma_dot: CMatrix,
    pub pi_gamma_dot: CMatrix,
}

impl PhaseFlow {
    pub fn norm(&self) -> f64 {
        (self.psi_dot.norm_squared()
            + self.pi_dot.norm_squared()
            + self.gamma_dot.norm_squared()
            + self.pi_gamma_dot.norm_squared())
        .sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        ((&self.psi_dot - &other.psi_dot).norm_squared()
            + (&self.pi_dot - &other.pi_dot).norm_squared()
            + (&self.gamma_dot - &other.gamma_dot).norm_squared()
            + (&self.pi_gamma_dot - &other.pi_gamma_dot).norm_squared())
        .sqrt()
    }
}

/// `conj(Γψ)`, i.e. the covector `ψ̄^b̄ Γ_b̄a`.
fn lowered_conj(psi: &CVector, gamma: &CMatrix) -> CVector {
    (gamma * psi).conjugate()
}

/// Momenta of the velocity-linear model, `π_a = iα ψ̄^b̄ Γ_b̄a`, with their conjugates.
pub fn legendre_singular(psi: &CVector, gamma: &HermitianForm, alpha: f64) -> (CVector, CVector) {
    let pi = lowered_conj(psi, gamma.matrix()) * (I * alpha);
    let pi_bar = pi.conjugate();
    (pi, pi_bar)
}

pub fn primary_constraints(p: &PhasePoint, alpha: f64) -> ConstraintValue {
    ConstraintValue { phi: &p.pi - lowered_conj(&p.psi, p.gamma.matrix()) * (I * alpha) }
}

/// Darboux momentum on the constraint surface, `Π_a = 2iα ψ̄^b̄ Γ_b̄a`.
pub fn darboux_momentum(psi: &CVector, gamma: &HermitianForm, alpha: f64) -> CVector {
    lowered_conj(psi, gamma.matrix()) * (I * 2.0 * alpha)
}

fn check_square(gamma: &HermitianForm, chi: &HermitianForm, psi: &CVector) -> Result<()> {
    let n = gamma.dim();
    for found in [chi.dim(), psi.len()] {
        if found != n {
            return Err(Error::DimensionMismatch { expected: n, found });
        }
    }
    Ok(())
}

/// Multipliers that keep the flow tangent to the constraint surface:
/// `λ = −(i/2α) Γ⁻¹(γχψ + ∂V/∂ψ̄)`.
pub fn lagrange_multipliers(
    psi: &CVector,
    gamma: &HermitianForm,
    chi: &HermitianForm,
    alpha: f64,
    gamma_coeff: f64,
    spec: &PotentialSpec,
) -> Result<CVector> {
    if alpha == 0.0 {
        return Err(Error::ZeroAlpha1);
    }
    check_square(gamma, chi, psi)?;
    let force = chi.matrix() * psi * c(gamma_coeff) + potential_gradient(psi, gamma, spec);
    Ok(gamma.inverse()? * force * (-I / (2.0 * alpha)))
}

/// Hamiltonian vector field of `γχψ̄ψ + V + λφ + λ̄φ̄` with the multipliers
/// of [`lagrange_multipliers`]; returns `(ψ̇, π̇)`.
pub fn constrained_flow(
    p: &PhasePoint,
    chi: &HermitianForm,
    alpha: f64,
    gamma_coeff: f64,
    spec: &PotentialSpec,
) -> Result<(CVector, CVector)> {
    let lambda = lagrange_multipliers(&p.psi, &p.gamma, chi, alpha, gamma_coeff, spec)?;
    let g = p.gamma.matrix();
    // ∂/∂ψ of γψ̄χψ + V is the conjugate of ∂/∂ψ̄
    let d_psi = (chi.matrix() * &p.psi * c(gamma_coeff) + potential_gradient(&p.psi, &p.gamma, spec)).conjugate();
    let pi_dot = -d_psi - g.transpose() * lambda.conjugate() * (I * alpha);
    Ok((lambda, pi_dot))
}

/// `ψ̇ = {ψ, H}` on the constraint surface, with `{ψ^a, ψ̄^b̄} = Γ^{ab̄}/2iα`
/// and `H = γψ̄χψ + V`.
pub fn reduced_bracket_flow(
    psi: &CVector,
    gamma: &HermitianForm,
    chi: &HermitianForm,
    alpha: f64,
    gamma_coeff: f64,
    spec: &PotentialSpec,
) -> Result<CVector> {
    if alpha == 0.0 {
        return Err(Error::ZeroAlpha1);
    }
    check_square(gamma, chi, psi)?;
    let bracket = gamma.inverse()? / (I * 2.0 * alpha);
    let grad_bar = chi.matrix() * psi * c(gamma_coeff) + potential_gradient(psi, gamma, spec);
    Ok(bracket * grad_bar)
}

/// Real form of the constrained velocity-linear model in coordinates
/// `ψ = (x + iy)/√2`, ordered `z = (x₁…xₙ, y₁…yₙ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DarbouxChart {
    /// `Re Γ`
    pub s: RMatrix,
    /// `Im Γ`
    pub a: RMatrix,
    /// `Re χ`
    pub sigma: RMatrix,
    /// `Im χ`
    pub alpha_mat: RMatrix,
    /// Antisymmetric `W` with restricted two-form `½ W_ij dz^i ∧ dz^j`.
    pub two_form: RMatrix,
    /// Symmetric `Q` with reduced Hamiltonian `½ zᵀ Q z`.
    pub hamiltonian: RMatrix,
    /// Real momenta `(u, v) = legendre · (x, y)`.
    pub legendre: RMatrix,
    /// Whether the two-form already equals `dy ∧ dx`.
    pub is_darboux: bool,
    /// The metric of the generalized chart with `S = g/(2α)`.
    pub g: RMatrix,
    /// Two-form in the coordinates `(x, y_a = g_ab y^b)`.
    pub g_two_form: RMatrix,
    /// Hamiltonian coefficients in `(x, y_a)`.
    pub g_hamiltonian: RMatrix,
    /// Basis change `B` with `B†ΓB = I/(2α)`, when a canonical chart was requested.
    pub canonical_basis: Option<CMatrix>,
    /// `B†χB` in the canonical basis.
    pub canonical_chi: Option<CMatrix>,
}

fn blocks(xx: &RMatrix, xy: &RMatrix, yx: &RMatrix, yy: &RMatrix) -> RMatrix {
    let n = xx.nrows();
    let mut m = RMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(xx);
    m.view_mut((0, n), (n, n)).copy_from(xy);
    m.view_mut((n, 0), (n, n)).copy_from(yx);
    m.view_mut((n, n), (n, n)).copy_from(yy);
    m
}

/// The form `dy_a ∧ dx^a` as an antisymmetric matrix.
pub fn canonical_two_form(n: usize) -> RMatrix {
    let id = RMatrix::identity(n, n);
    blocks(&RMatrix::zeros(n, n), &(-&id), &id, &RMatrix::zeros(n, n))
}

/// Restriction of `2iα Γ dψ̄ ∧ dψ` evaluated directly on real tangent vectors.
pub fn pullback_two_form(gamma: &HermitianForm, alpha: f64) -> RMatrix {
    let n = gamma.dim();
    let tangent = |i: usize| -> CVector {
        let mut v = CVector::zeros(n);
        if i < n {
            v[i] = c(std::f64::consts::FRAC_1_SQRT_2);
        } else {
            v[i - n] = I * std::f64::consts::FRAC_1_SQRT_2;
        }
        v
    };
    RMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (u, w) = (tangent(i), tangent(j));
        let a = u.dotc(&(gamma.matrix() * &w));
        let b = w.dotc(&(gamma.matrix() * &u));
        (I * 2.0 * alpha * (a - b)).re
    })
}

/// Basis change `B = L^{-†}/√(2|α|)` from the Cholesky factor of `sign(α)Γ`.
pub fn canonical_basis(gamma: &HermitianForm, alpha: f64) -> Result<CMatrix> {
    if alpha == 0.0 {
        return Err(Error::ZeroAlpha1);
    }
    let signed = HermitianForm::new_unchecked(gamma.matrix() * c(alpha.signum()));
    if !signed.is_positive_definite() {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = Cholesky::new(signed.into_matrix()).ok_or(Error::NotPositiveDefinite)?;
    let l_inv = chol.l().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    Ok(l_inv.adjoint() / c((2.0 * alpha.abs()).sqrt()))
}

/// Real Darboux reduction of the constrained model with Hamiltonian `γψ̄χψ`.
///
/// With `chart = true` the canonical basis is computed as well, which needs
/// `sign(α)Γ` positive definite. Without an explicit `g` the generalized
/// chart uses `g = 2αS`; a supplied `g` must satisfy that relation.
pub fn darboux_reduce(
    gamma: &HermitianForm,
    chi: &HermitianForm,
    alpha: f64,
    gamma_coeff: f64,
    g: Option<&RMatrix>,
    chart: bool,
) -> Result<DarbouxChart> {
    if alpha == 0.0 {
        return Err(Error::ZeroAlpha1);
    }
    let n = gamma.dim();
    if chi.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: chi.dim() });
    }
    let (s, a) = real_decompose(gamma.matrix())?;
    let (sigma, alpha_mat) = real_decompose(chi.matrix())?;

    let two_form = blocks(&(-2.0 * alpha * &a), &(-2.0 * alpha * &s), &(2.0 * alpha * &s), &(-2.0 * alpha * &a));
    let hamiltonian = blocks(
        &(gamma_coeff * &sigma),
        &(-gamma_coeff * &alpha_mat),
        &(gamma_coeff * &alpha_mat),
        &(gamma_coeff * &sigma),
    );
    let legendre = blocks(&(alpha * &a), &(alpha * &s), &(-alpha * &s), &(alpha * &a));
    let is_darboux = (&two_form - canonical_two_form(n)).amax() <= 1e-12 * two_form.amax().max(1.0);

    let g_metric = match g {
        Some(g) => {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: g.nrows() });
            }
            let expected = 2.0 * alpha * &s;
            if (&expected - g).amax() > 1e-10 * g.amax().max(1.0) {
                return Err(Error::InvalidInput("the supplied g does not satisfy S = g/(2 alpha)".into()));
            }
            g.clone()
        }
        None => 2.0 * alpha * &s,
    };
    let (g_two_form, g_hamiltonian) = match g_metric.clone().try_inverse() {
        Some(g_inv) => {
            let g_two = blocks(
                &(-2.0 * alpha * &a),
                &(-RMatrix::identity(n, n)),
                &RMatrix::identity(n, n),
                &(-2.0 * alpha * &g_inv * &a * &g_inv),
            );
            let kinetic = gamma_coeff * &g_inv * &sigma * &g_inv;
            // coefficient of x^a y_b is ½γ[(g⁻¹α)^b_a − (αg⁻¹)_a^b], stored at [a][b]
            let cross = 0.5 * gamma_coeff * ((&g_inv * &alpha_mat).transpose() - &alpha_mat * &g_inv);
            let g_ham = blocks(&(gamma_coeff * &sigma), &cross, &cross.transpose(), &kinetic);
            (g_two, g_ham)
        }
        None => (RMatrix::zeros(2 * n, 2 * n), RMatrix::zeros(2 * n, 2 * n)),
    };

    let (canonical_basis, canonical_chi) = if chart {
        let b = canonical_basis(gamma, alpha)?;
        let chi_b = b.adjoint() * chi.matrix() * &b;
        (Some(b), Some(chi_b))
    } else {
        (None, None)
    };

    Ok(DarbouxChart {
        s,
        a,
        sigma,
        alpha_mat,
        two_form,
        hamiltonian,
        legendre,
        is_darboux,
        g: g_metric,
        g_two_form,
        g_hamiltonian,
        canonical_basis,
        canonical_chi,
    })
}

/// Real phase-space coordinates `(x, y)` of `ψ = (x + iy)/√2`.
pub fn real_coordinates(psi: &CVector) -> nalgebra::DVector<f64> {
    let n = psi.len();
    let s = std::f64::consts::SQRT_2;
    nalgebra::DVector::from_fn(2 * n, |i, _| if i < n { psi[i].re * s } else { psi[i - n].im * s })
}

/// Legendre map of the regular model: `π = conj(Γ(α₂ψ̇ − iα₁ψ))`, `P = α₃M + 2Ω(Γ̇)`.
pub fn legendre_regular(state: &FullState, params: &ModelParams) -> Result<PhasePoint> {
    let g = state.gamma.matrix();
    let w = &state.psi_dot * c(params.alpha2) - &state.psi * (I * params.alpha1);
    let pi = (g * w).conjugate();
    let kin = Kinetic::new(&state.psi, &state.gamma, params)?;
    let p = kin.m.scale(params.alpha3) + kin.omega(state.gamma_dot.matrix()).scale(2.0);
    Ok(PhasePoint {
        psi: state.psi.clone(),
        pi,
        gamma: state.gamma.clone(),
        pi_gamma: HermitianForm::new_unchecked(p),
        t: state.t,
    })
}

/// Velocities `(ψ̇, Γ̇)` from momenta: `ψ̇ = (Γ⁻¹π̄ + iα₁ψ)/α₂`, `Γ̇ = ½Ω⁻¹(P − α₃M)`.
pub fn legendre_inverse(p: &PhasePoint, params: &ModelParams) -> Result<(CVector, CMatrix)> {
    if params.alpha2 == 0.0 {
        return Err(Error::ZeroAlpha2);
    }
    let kin = Kinetic::new(&p.psi, &p.gamma, params)?;
    let v = (&kin.k * p.pi_bar() + &p.psi * (I * params.alpha1)) / c(params.alpha2);
    let q = p.pi_gamma.matrix() - kin.m.scale(params.alpha3);
    let d = crate::dynamics::solve_kinetic(&kin, &p.psi, &p.gamma, params, &q)?.scale(0.5);
    Ok((v, d))
}

/// Configuration state reached from a phase point through the inverse Legendre map.
pub fn state_of(p: &PhasePoint, params: &ModelParams) -> Result<FullState> {
    let (v, d) = legendre_inverse(p, params)?;
    Ok(FullState {
        psi: p.psi.clone(),
        psi_dot: v,
        gamma: p.gamma.clone(),
        gamma_dot: HermitianForm::new_unchecked(d),
        t: p.t,
    })
}

fn psi_sector_terms(
    psi: &CVector,
    pi: &CVector,
    gamma: &CMatrix,
    k: &CMatrix,
    theta1: f64,
    params: &ModelParams,
    chi: &HermitianForm,
    t: f64,
) -> Result<f64> {
    let (a1, a2) = (params.alpha1, params.alpha2);
    let pi_bar = pi.conjugate();
    let mut h = pi.dot(&(k * &pi_bar)) / c(a2);
    h += (pi.dot(psi) - psi.conjugate().dot(&pi_bar)) * (I * a1 / a2);
    let static_op = gamma.scale(params.alpha4 - a1 * a1 / a2) + chi.matrix().scale(params.alpha5);
    h -= psi.dotc(&(static_op * psi));
    h += c(params.potential_value(theta1));
    if let Some(f) = params.forcing_at(t, psi.len())? {
        h -= c(2.0 * f.dot(psi).re);
    }
    Ok(h.re)
}

/// Hamiltonian of the regular model:
///
/// ```text
/// H = (1/α₂) πᵀΓ⁻¹π̄ + (iα₁/α₂)(π·ψ − ψ̄·π̄) − ψ†((α₄ − α₁²/α₂)Γ + α₅χ)ψ
///   + ¼ Tr((P − α₃M) Ω⁻¹(P − α₃M)) + V(θ₁)
/// ```
pub fn hamiltonian(p: &PhasePoint, params: &ModelParams, chi: &HermitianForm) -> Result<f64> {
    if params.alpha2 == 0.0 {
        return Err(Error::ZeroAlpha2);
    }
    let n = p.dim();
    check_square(&p.gamma, chi, &p.psi)?;
    if p.pi.len() != n || p.pi_gamma.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.pi.len().min(p.pi_gamma.dim()) });
    }
    let kin = Kinetic::new(&p.psi, &p.gamma, params)?;
    let mut h = psi_sector_terms(&p.psi, &p.pi, p.gamma.matrix(), &kin.k, kin.theta1, params, chi, p.t)?;
    let q = p.pi_gamma.matrix() - kin.m.scale(params.alpha3);
    if q.norm() > 0.0 {
        let x = crate::dynamics::solve_kinetic(&kin, &p.psi, &p.gamma, params, &q)?;
        h += 0.25 * (&q * x).trace().re;
    }
    if !h.is_finite() {
        return Err(Error::NonFinite("Hamiltonian"));
    }
    Ok(h)
}

/// Hamiltonian of the wave-function sector with `Γ` frozen (requires `α₂ ≠ 0`).
pub fn frozen_gamma_hamiltonian(
    psi: &CVector,
    pi: &CVector,
    gamma: &HermitianForm,
    params: &ModelParams,
    chi: &HermitianForm,
    t: f64,
) -> Result<f64> {
    if params.alpha2 == 0.0 {
        return Err(Error::ZeroBeta);
    }
    check_square(gamma, chi, psi)?;
    let k = gamma.inverse()?;
    psi_sector_terms(psi, pi, gamma.matrix(), &k, gamma.quadratic(psi), params, chi, t)
}

fn step(scale: f64) -> f64 {
    1e-6 * scale.max(1.0)
}

/// `(∂H/∂z̄-free Wirtinger derivative) ½(∂_re − i∂_im) H` at each component.
fn wirtinger(z: &CVector, h: f64, f: &dyn Fn(&CVector) -> Result<f64>) -> Result<CVector> {
    let mut out = CVector::zeros(z.len());
    for a in 0..z.len() {
        let mut partial = [0.0; 2];
        for (slot, dir) in [c(1.0), I].into_iter().enumerate() {
            let mut plus = z.clone();
            let mut minus = z.clone();
            plus[a] += dir * h;
            minus[a] -= dir * h;
            partial[slot] = (f(&plus)? - f(&minus)?) / (2.0 * h);
        }
        out[a] = C64::new(partial[0], -partial[1]) * 0.5;
    }
    Ok(out)
}

fn hermitian_gradient(m: &CMatrix, h: f64, f: &dyn Fn(&CMatrix) -> Result<f64>) -> Result<CMatrix> {
    let n = m.nrows();
    let mut directional = Vec::with_capacity(n * n);
    for e in hermitian_basis(n) {
        let plus = m + &e * c(h);
        let minus = m - &e * c(h);
        directional.push((f(&plus)? - f(&minus)?) / (2.0 * h));
    }
    Ok(gradient_from_directional(&directional, n))
}

/// Canonical flow from central-difference derivatives of [`hamiltonian`]:
/// `ψ̇ = ∂H/∂π`, `π̇ = −∂H/∂ψ`, `Γ̇ = ∇_P H`, `Ṗ = −∇_Γ H`.
pub fn hamilton_flow_check(p: &PhasePoint, params: &ModelParams, chi: &HermitianForm) -> Result<PhaseFlow> {
    let h_psi = step(p.psi.camax());
    let h_pi = step(p.pi.camax());
    let h_g = step(p.gamma.matrix().camax());
    let h_p = step(p.pi_gamma.matrix().camax());

    let psi_dot = wirtinger(&p.pi, h_pi, &|pi| {
        hamiltonian(&PhasePoint { pi: pi.clone(), ..p.clone() }, params, chi)
    })?;
    let pi_dot = -wirtinger(&p.psi, h_psi, &|psi| {
        hamiltonian(&PhasePoint { psi: psi.clone(), ..p.clone() }, params, chi)
    })?;
    let gamma_dot = hermitian_gradient(p.pi_gamma.matrix(), h_p, &|m| {
        hamiltonian(&PhasePoint { pi_gamma: HermitianForm::new_unchecked(m.clone()), ..p.clone() }, params, chi)
    })?;
    let pi_gamma_dot = -hermitian_gradient(p.gamma.matrix(), h_g, &|m| {
        hamiltonian(&PhasePoint { gamma: HermitianForm::new_unchecked(m.clone()), ..p.clone() }, params, chi)
    })?;
    Ok(PhaseFlow { psi_dot, pi_dot, gamma_dot, pi_gamma_dot })
}

/// The Lagrangian flow pushed through the differential of [`legendre_regular`].
pub fn lagrangian_phase_flow(state: &FullState, params: &ModelParams, chi: &HermitianForm) -> Result<PhaseFlow> {
    let (psi_ddot, gamma_ddot) = rhs_full(state, params, chi)?;
    let g = state.gamma.matrix();
    let d = state.gamma_dot.matrix();
    let v = &state.psi_dot;
    let w = v * c(params.alpha2) - &state.psi * (I * params.alpha1);
    let w_dot = &psi_ddot * c(params.alpha2) - v * (I * params.alpha1);
    let pi_dot = (d * w + g * w_dot).conjugate();
    let kin = Kinetic::new(&state.psi, &state.gamma, params)?;
    let pi_gamma_dot = kin.m_rate(v, d).scale(params.alpha3)
        + kin.omega(&gamma_ddot).scale(2.0)
        + kin.omega_rate(d, v, d).scale(2.0);
    Ok(PhaseFlow { psi_dot: v.clone(), pi_dot, gamma_dot: d.clone(), pi_gamma_dot })
}

/// Canonical flow `(ψ̇, π̇)` of [`frozen_gamma_hamiltonian`] by central differences.
pub fn frozen_gamma_flow_check(
    psi: &CVector,
    pi: &CVector,
    gamma: &HermitianForm,
    params: &ModelParams,
    chi: &HermitianForm,
    t: f64,
) -> Result<(CVector, CVector)> {
    let psi_dot = wirtinger(pi, step(pi.camax()), &|q| frozen_gamma_hamiltonian(psi, q, gamma, params, chi, t))?;
    let pi_dot = -wirtinger(psi, step(psi.camax()), &|q| frozen_gamma_hamiltonian(q, pi, gamma, params, chi, t))?;
    Ok((psi_dot, pi_dot))
}

/// The second-order Lagrangian flow with frozen `Γ`, expressed on `(ψ, π)`.
pub fn frozen_gamma_lagrangian_flow(
    state: &FullState,
    params: &ModelParams,
    chi: &HermitianForm,
) -> Result<(CVector, CVector)> {
    let mut frozen = state.clone();
    frozen.gamma_dot = HermitianForm::zeros(state.dim());
    let acc = rhs_second_order(&frozen, chi, params, None)?;
    let g = state.gamma.matrix();
    let w_dot = acc * c(params.alpha2) - &state.psi_dot * (I * params.alpha1);
    Ok((state.psi_dot.clone(), (g * w_dot).conjugate()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rhs_direct_nonlinear, rhs_schrodinger};
    use crate::models::energy;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        (&a + a.adjoint()).scale(0.5)
    }

    fn random_positive(rng: &mut ChaCha8Rng, n: usize) -> HermitianForm {
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)));
        HermitianForm::new(&a * a.adjoint() + CMatrix::identity(n, n)).unwrap()
    }

    fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
        ModelParams {
            alpha1: rng.gen_range(0.2..1.0),
            alpha2: rng.gen_range(0.5..1.5),
            alpha3: rng.gen_range(-0.5..0.5),
            alpha4: rng.gen_range(-0.5..0.5),
            alpha5: rng.gen_range(-1.0..0.0),
            alpha6: rng.gen_range(0.5..1.5),
            alpha7: rng.gen_range(-0.1..0.3),
            alpha8: rng.gen_range(-0.2..0.2),
            alpha9: rng.gen_range(-0.2..0.2),
            kappa: rng.gen_range(0.0..0.3),
            ..ModelParams::default()
        }
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> FullState {
        let d = HermitianForm::new(random_hermitian(rng, n).scale(0.5)).unwrap();
        FullState::new(random_vector(rng, n), random_vector(rng, n), random_positive(rng, n), d, 0.0).unwrap()
    }

    #[test]
    fn singular_legendre_examples() {
        let g = HermitianForm::identity(2);
        let (pi, _) = legendre_singular(&CVector::zeros(2), &g, 1.0);
        assert_eq!(pi, CVector::zeros(2));
        let hbar = 0.8;
        let (pi, pi_bar) = legendre_singular(&CVector::from_vec(vec![c(1.0)]), &HermitianForm::identity(1), hbar);
        assert_eq!(pi[0], C64::new(0.0, hbar));
        assert_eq!(pi_bar, pi.conjugate());
    }

    #[test]
    fn constraints_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let alpha = 0.7;
        let g = random_positive(&mut rng, 2);
        let psi = random_vector(&mut rng, 2);
        let (pi, _) = legendre_singular(&psi, &g, alpha);
        let mut p = PhasePoint { psi: psi.clone(), pi, gamma: g.clone(), pi_gamma: HermitianForm::zeros(2), t: 0.0 };
        assert!(primary_constraints(&p, alpha).norm() < 1e-15);
        let delta = random_vector(&mut rng, 2);
        p.pi += &delta;
        let phi = primary_constraints(&p, alpha);
        assert!((&phi.phi - &delta).norm() < 1e-15);
        assert_eq!(phi.phi_bar(), phi.phi.conjugate());
        // hand formula: φ_a = π_a − iα Σ_b ψ̄_b Γ_ba
        for a in 0..2 {
            let hand: C64 = (0..2).map(|b| psi[b].conj() * g.matrix()[(b, a)]).sum::<C64>() * I * alpha;
            assert_relative_eq!((phi.phi[a] - (p.pi[a] - hand)).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn darboux_momentum_is_twice_the_constrained_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g = random_positive(&mut rng, 3);
        let psi = random_vector(&mut rng, 3);
        let (pi, _) = legendre_singular(&psi, &g, -0.6);
        assert!((darboux_momentum(&psi, &g, -0.6) - pi * c(2.0)).norm() < 1e-15);
    }

    #[test]
    fn multiplier_examples() {
        let (hbar, e) = (0.9, 1.7);
        let psi = CVector::from_vec(vec![C64::new(0.4, -0.3)]);
        let lambda = lagrange_multipliers(&psi, &HermitianForm::identity(1), &HermitianForm::diagonal(&[e]), hbar, 2.0, &PotentialSpec::None)
            .unwrap();
        assert_relative_eq!((lambda[0] - psi[0] * C64::new(0.0, -e / hbar)).norm(), 0.0, epsilon = 1e-15);

        let zero = lagrange_multipliers(&CVector::zeros(2), &HermitianForm::identity(2), &HermitianForm::identity(2), 1.0, 2.0, &PotentialSpec::None)
            .unwrap();
        assert_eq!(zero, CVector::zeros(2));

        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let g = random_positive(&mut rng, 2);
        let chi = HermitianForm::new(random_hermitian(&mut rng, 2)).unwrap();
        let psi = random_vector(&mut rng, 2);
        let kappa = 0.4;
        let plain = lagrange_multipliers(&psi, &g, &chi, 0.8, 2.0, &PotentialSpec::None).unwrap();
        let quartic = lagrange_multipliers(&psi, &g, &chi, 0.8, 2.0, &PotentialSpec::QuarticPure { kappa }).unwrap();
        let extra = &psi * (-I / (2.0 * 0.8) * 2.0 * kappa * g.quadratic(&psi));
        assert!((quartic - plain - extra).norm() < 1e-14);
    }

    #[test]
    fn constrained_flow_is_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let alpha = 0.7;
        let spec = PotentialSpec::QuarticShifted { kappa: 0.3, shift: 0.5 };
        let g = random_positive(&mut rng, 3);
        let chi = HermitianForm::new(random_hermitian(&mut rng, 3)).unwrap();
        let psi = random_vector(&mut rng, 3);
        let (pi, _) = legendre_singular(&psi, &g, alpha);
        let p = PhasePoint { psi, pi, gamma: g.clone(), pi_gamma: HermitianForm::zeros(3), t: 0.0 };
        let (psi_dot, pi_dot) = constrained_flow(&p, &chi, alpha, 2.0, &spec).unwrap();
        // dφ/dt = π̇ − iα conj(Γψ̇)
        let phi_dot = pi_dot - (g.matrix() * psi_dot).conjugate() * (I * alpha);
        assert!(phi_dot.norm() < 1e-13);
    }

    #[test]
    fn reduced_flow_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let g = random_positive(&mut rng, 3);
        let chi = HermitianForm::new(random_hermitian(&mut rng, 3)).unwrap();
        let psi = random_vector(&mut rng, 3);
        let a = reduced_bracket_flow(&psi, &g, &chi, 1.1, 2.0, &PotentialSpec::None).unwrap();
        let b = rhs_schrodinger(&psi, &g, &chi, 1.1, 2.0).unwrap();
        assert!((a - b).norm() < 1e-12);

        let spec = PotentialSpec::QuarticPure { kappa: 0.6 };
        let p = ModelParams::legacy(1.1, 0.0, 2.0).with_potential(spec.clone());
        let a = reduced_bracket_flow(&psi, &g, &chi, 1.1, 2.0, &spec).unwrap();
        let b = rhs_direct_nonlinear(&psi, &g, &chi, &p, 0.0).unwrap();
        assert!((a - b).norm() < 1e-12);

        // n = 1: iħψ̇ = Eψ + κθ₁ψ
        let (hbar, e, kappa) = (0.8, 1.3, 0.6);
        let psi = CVector::from_vec(vec![C64::new(0.5, 0.2)]);
        let theta = psi[0].norm_sqr();
        let v = reduced_bracket_flow(&psi, &HermitianForm::identity(1), &HermitianForm::diagonal(&[e]), hbar, 2.0, &spec).unwrap();
        let expected = psi[0] * (e + kappa * theta) / (I * hbar);
        assert_relative_eq!((v[0] - expected).norm(), 0.0, epsilon = 1e-15);

        let zero = reduced_bracket_flow(&CVector::zeros(2), &HermitianForm::identity(2), &HermitianForm::identity(2), 1.0, 2.0, &spec).unwrap();
        assert_eq!(zero, CVector::zeros(2));
    }

    #[test]
    fn darboux_canonical_case() {
        let alpha = 0.5;
        let chart = darboux_reduce(&HermitianForm::identity(2), &HermitianForm::identity(2), alpha, 2.0, None, true).unwrap();
        assert_eq!(chart.s, RMatrix::identity(2, 2));
        assert_eq!(chart.a, RMatrix::zeros(2, 2));
        assert!(chart.is_darboux);
        assert_eq!(chart.two_form, canonical_two_form(2));
    }

    #[test]
    fn darboux_oscillator_form() {
        let alpha = 0.8;
        let gamma_coeff = 2.0;
        let g = HermitianForm::new(CMatrix::identity(2, 2) / c(2.0 * alpha)).unwrap();
        let sigma = RMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, -0.4]);
        let chi = HermitianForm::new(sigma.map(c)).unwrap();
        let chart = darboux_reduce(&g, &chi, alpha, gamma_coeff, None, true).unwrap();
        assert!(chart.is_darboux);
        let z = nalgebra::DVector::from_vec(vec![0.3, -1.1, 0.7, 0.2]);
        let (x, y) = (z.rows(0, 2), z.rows(2, 2));
        let hand = 0.5 * gamma_coeff * ((y.transpose() * &sigma * y)[(0, 0)] + (x.transpose() * &sigma * x)[(0, 0)]);
        let chart_value = 0.5 * (z.transpose() * &chart.hamiltonian * &z)[(0, 0)];
        assert_relative_eq!(hand, chart_value, epsilon = 1e-12);
    }

    #[test]
    fn darboux_matches_direct_pullback() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for n in 1..=4 {
            let g = random_positive(&mut rng, n);
            let chi = HermitianForm::new(random_hermitian(&mut rng, n)).unwrap();
            let alpha = rng.gen_range(0.2..1.5);
            let chart = darboux_reduce(&g, &chi, alpha, 2.0, None, false).unwrap();
            assert!((&chart.two_form - pullback_two_form(&g, alpha)).amax() < 1e-10);
        }
    }

    #[test]
    fn darboux_reduced_hamiltonian_equals_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let g = random_positive(&mut rng, 3);
        let chi = HermitianForm::new(random_hermitian(&mut rng, 3)).unwrap();
        let psi = random_vector(&mut rng, 3);
        let gamma_coeff = 1.7;
        let chart = darboux_reduce(&g, &chi, 0.4, gamma_coeff, None, false).unwrap();
        let z = real_coordinates(&psi);
        let from_chart = 0.5 * (z.transpose() * &chart.hamiltonian * &z)[(0, 0)];
        let direct = gamma_coeff * psi.dotc(&(chi.matrix() * &psi)).re;
        assert_relative_eq!(from_chart, direct, epsilon = 1e-12);

        // real Legendre map agrees with the complex one: p_x = √2 Re π, p_y = −√2 Im π
        let (pi, _) = legendre_singular(&psi, &g, 0.4);
        let uv = &chart.legendre * &z;
        for a in 0..3 {
            assert_relative_eq!(uv[a], std::f64::consts::SQRT_2 * pi[a].re, epsilon = 1e-12);
            assert_relative_eq!(uv[3 + a], -std::f64::consts::SQRT_2 * pi[a].im, epsilon = 1e-12);
        }
    }

    #[test]
    fn darboux_generalized_chart() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let g = random_positive(&mut rng, 2);
        let chi = HermitianForm::new(random_hermitian(&mut rng, 2)).unwrap();
        let alpha = 0.6;
        let chart = darboux_reduce(&g, &chi, alpha, 2.0, None, true).unwrap();
        // change of coordinates y → y_low = g y applied to the plain chart
        let g_inv = chart.g.clone().try_inverse().unwrap();
        let mut j = RMatrix::identity(4, 4);
        j.view_mut((2, 2), (2, 2)).copy_from(&g_inv);
        let expected_form = j.transpose() * &chart.two_form * &j;
        assert!((expected_form - &chart.g_two_form).amax() < 1e-12);
        let expected_ham = j.transpose() * &chart.hamiltonian * &j;
        assert!((expected_ham - &chart.g_hamiltonian).amax() < 1e-12);

        let b = chart.canonical_basis.unwrap();
        let transformed = b.adjoint() * g.matrix() * &b;
        assert!((transformed - CMatrix::identity(2, 2) / c(2.0 * alpha)).norm() < 1e-12);
    }

    #[test]
    fn darboux_cross_terms_for_complex_form() {
        // Γ = [[s, ia],[−ia, s]] gives −2αA blocks on the diagonal of the form
        let (s, a, alpha) = (2.0, 0.5, 0.3);
        let g = HermitianForm::new(CMatrix::from_row_slice(2, 2, &[c(s), C64::new(0.0, a), C64::new(0.0, -a), c(s)])).unwrap();
        let chart = darboux_reduce(&g, &HermitianForm::identity(2), alpha, 2.0, None, false).unwrap();
        assert_relative_eq!(chart.two_form[(0, 1)], -2.0 * alpha * a);
        assert_relative_eq!(chart.two_form[(1, 0)], 2.0 * alpha * a);
        assert_relative_eq!(chart.two_form[(2, 3)], -2.0 * alpha * a);
        assert_relative_eq!(chart.two_form[(0, 2)], -2.0 * alpha * s);
        assert_relative_eq!(chart.two_form[(2, 0)], 2.0 * alpha * s);
        assert!(!chart.is_darboux);
    }

    #[test]
    fn indefinite_form_refuses_chart() {
        let g = HermitianForm::diagonal(&[1.0, -1.0]);
        let r = darboux_reduce(&g, &HermitianForm::identity(2), 0.5, 2.0, None, true);
        assert!(matches!(r, Err(Error::NotPositiveDefinite)));
        assert!(darboux_reduce(&g, &HermitianForm::identity(2), 0.5, 2.0, None, false).is_ok());
        // negative α needs a negative definite form
        assert!(canonical_basis(&HermitianForm::diagonal(&[-1.0, -2.0]), -0.5).is_ok());
    }

    #[test]
    fn regular_legendre_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let g = random_positive(&mut rng, 3);
        let psi = random_vector(&mut rng, 3);
        let p = ModelParams { alpha1: 0.4, alpha2: 1.0, alpha3: 0.0, alpha6: 1.0, ..ModelParams::default() };
        let s = FullState::at_rest(psi.clone(), g.clone()).unwrap();
        let pp = legendre_regular(&s, &p).unwrap();
        assert_eq!(pp.pi_gamma.matrix(), &CMatrix::zeros(3, 3));
        let (pi, _) = legendre_singular(&psi, &g, 0.4);
        assert!((pp.pi - pi).norm() < 1e-15);
    }

    #[test]
    fn regular_legendre_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        for i in 0..50 {
            let p = random_params(&mut rng);
            let s = random_state(&mut rng, 1 + i % 4);
            let pp = legendre_regular(&s, &p).unwrap();
            let (v, d) = legendre_inverse(&pp, &p).unwrap();
            assert!((v - &s.psi_dot).norm() < 1e-10);
            assert!((d - s.gamma_dot.matrix()).norm() < 1e-10);
        }
        let pp = legendre_regular(&random_state(&mut rng, 2), &ModelParams::schrodinger(1.0)).unwrap();
        assert!(matches!(legendre_inverse(&pp, &ModelParams::schrodinger(1.0)), Err(Error::ZeroAlpha2)));
    }

    #[test]
    fn hamiltonian_pulls_back_to_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for i in 0..100 {
            let n = 1 + i % 3;
            let p = random_params(&mut rng);
            let s = random_state(&mut rng, n);
            let chi = HermitianForm::new(random_hermitian(&mut rng, n)).unwrap();
            let h = hamiltonian(&legendre_regular(&s, &p).unwrap(), &p, &chi).unwrap();
            let e = energy(&s, &p, &chi).unwrap();
            assert!((h - e).abs() < 1e-10 * e.abs().max(1.0), "{h} vs {e}");
        }
    }

    #[test]
    fn hamiltonian_sector_isolation_and_quartic_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let g = random_positive(&mut rng, 2);
        let pg = HermitianForm::new(random_hermitian(&mut rng, 2)).unwrap();
        let p = ModelParams { alpha1: 0.3, alpha2: 1.0, alpha6: 0.9, alpha7: 0.1, ..ModelParams::default() };
        let point = PhasePoint { psi: CVector::zeros(2), pi: CVector::zeros(2), gamma: g.clone(), pi_gamma: pg.clone(), t: 0.0 };
        let h = hamiltonian(&point, &p, &HermitianForm::identity(2)).unwrap();
        let inv = crate::models::omega_inverse(&CVector::zeros(2), &g, &p).unwrap();
        let direct = 0.25 * (pg.matrix() * inv.apply(pg.matrix())).trace().re;
        assert_relative_eq!(h, direct, epsilon = 1e-13);

        let psi = random_vector(&mut rng, 2);
        let point = PhasePoint { psi: psi.clone(), ..point };
        let kappa = 0.7;
        let with = hamiltonian(&point, &ModelParams { kappa, ..p.clone() }, &HermitianForm::identity(2)).unwrap();
        let without = hamiltonian(&point, &p, &HermitianForm::identity(2)).unwrap();
        assert_relative_eq!(with - without, kappa * g.quadratic(&psi).powi(2), epsilon = 1e-12);
    }

    #[test]
    fn two_path_flow_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for i in 0..10 {
            let n = 1 + i % 3;
            let p = random_params(&mut rng);
            let s = random_state(&mut rng, n);
            let chi = HermitianForm::new(random_hermitian(&mut rng, n)).unwrap();
            let fd = hamilton_flow_check(&legendre_regular(&s, &p).unwrap(), &p, &chi).unwrap();
            let lag = lagrangian_phase_flow(&s, &p, &chi).unwrap();
            assert!(fd.distance(&lag) < 1e-5 * lag.norm().max(1.0), "{} vs {}", fd.distance(&lag), lag.norm());
        }
    }

    #[test]
    fn equilibrium_has_zero_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let g = random_positive(&mut rng, 2);
        let p = ModelParams { alpha2: 1.0, alpha6: 1.0, ..ModelParams::default() };
        let s = FullState::at_rest(CVector::zeros(2), g).unwrap();
        let flow = hamilton_flow_check(&legendre_regular(&s, &p).unwrap(), &p, &HermitianForm::zeros(2)).unwrap();
        assert!(flow.norm() < 1e-9);
    }

    #[test]
    fn frozen_sector_matches_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let p = ModelParams::legacy(0.7, 0.5, 2.0).with_potential(PotentialSpec::QuarticPure { kappa: 0.2 });
        let s = random_state(&mut rng, 3);
        let chi = HermitianForm::new(random_hermitian(&mut rng, 3)).unwrap();
        let g = s.gamma.matrix();
        let pi = (g * (&s.psi_dot * c(p.alpha2) - &s.psi * (I * p.alpha1))).conjugate();
        let (a, b) = frozen_gamma_flow_check(&s.psi, &pi, &s.gamma, &p, &chi, 0.0).unwrap();
        let (c_, d) = frozen_gamma_lagrangian_flow(&s, &p, &chi).unwrap();
        assert!((a - c_).norm() < 1e-6);
        assert!((b - d).norm() < 1e-6);
    }
}
