//! The parameterised Lagrangian family, the kinetic tensor of the
//! scalar-product sector and its closed-form inverse, potentials and energy.
//!
//! With `v = ψ̇`, `D = Γ̇`, `K = Γ⁻¹`, `θ₁ = ψ†Γψ` and `M = K + α₉ψψ†`, the
//! total Lagrangian is
//!
//! ```text
//! L = iα₁(ψ†Γv − v†Γψ) + α₂ v†Γv + ψ†(α₄Γ + α₅χ)ψ
//!   + α₃ Tr(M D) + Tr(D Ω(D)) − V(θ₁) + (F·ψ + conj)
//! Ω(X) = α₆ M X M + α₇ Tr(M X) M + α₈ (ψ†Xψ) ψψ†
//! ```
//!
//! where `V(θ₁) = κθ₁² + f(θ₁)` with `f` from [`PotentialSpec`].

use std::fmt;
use std::sync::Arc;

use crate::algebra::{c, CMatrix, CVector, HermitianForm, HermitianTensor4, MixedTensor, C64, I};
use crate::error::{Error, Result};

/// Guard applied to every denominator of the closed-form kinetic inverse.
pub const DENOMINATOR_EPS: f64 = 1e-10;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type CovectorFn = Arc<dyn Fn(f64) -> CVector + Send + Sync>;

/// A real potential `f(θ₁)` of the invariant `θ₁ = ψ†Γψ`.
#[derive(Clone, Default)]
pub enum PotentialSpec {
    #[default]
    None,
    /// `κ(x − a)²`
    QuarticShifted { kappa: f64, shift: f64 },
    /// `κx²`
    QuarticPure { kappa: f64 },
    /// Arbitrary `f`; without `df` the derivative is taken by central differences.
    Custom { f: RealFn, df: Option<RealFn> },
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(fm, "None"),
            Self::QuarticShifted { kappa, shift } => {
                write!(fm, "QuarticShifted {{ kappa: {kappa}, shift: {shift} }}")
            }
            Self::QuarticPure { kappa } => write!(fm, "QuarticPure {{ kappa: {kappa} }}"),
            Self::Custom { df, .. } => write!(fm, "Custom {{ analytic_derivative: {} }}", df.is_some()),
        }
    }
}

impl PotentialSpec {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::QuarticShifted { kappa, shift } => kappa * (x - shift).powi(2),
            Self::QuarticPure { kappa } => kappa * x * x,
            Self::Custom { f, .. } => f(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::QuarticShifted { kappa, shift } => 2.0 * kappa * (x - shift),
            Self::QuarticPure { kappa } => 2.0 * kappa * x,
            Self::Custom { df: Some(df), .. } => df(x),
            Self::Custom { f, df: None } => {
                let h = 1e-6 * x.abs().max(1.0);
                (f(x + h) - f(x - h)) / (2.0 * h)
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Self::None)
    }
}

/// External driving covector `F_a(t)`, entering as `F·ψ + conj`.
#[derive(Clone)]
pub enum Forcing {
    /// `F(t) = amplitude · e^{iωt}`
    Harmonic { amplitude: CVector, omega: f64 },
    Custom(CovectorFn),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Harmonic { amplitude, omega } => fm
                .debug_struct("Harmonic")
                .field("amplitude", &amplitude.as_slice())
                .field("omega", omega)
                .finish(),
            Self::Custom(_) => write!(fm, "Custom(..)"),
        }
    }
}

impl Forcing {
    pub fn at(&self, t: f64) -> CVector {
        match self {
            Self::Harmonic { amplitude, omega } => amplitude * C64::from_polar(1.0, omega * t),
            Self::Custom(f) => f(t),
        }
    }
}

/// Coupling constants of the total Lagrangian.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
    pub alpha6: f64,
    pub alpha7: f64,
    pub alpha8: f64,
    pub alpha9: f64,
    pub kappa: f64,
    pub hbar: f64,
    pub potential: PotentialSpec,
    pub forcing: Option<Forcing>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha1: 0.0,
            alpha2: 0.0,
            alpha3: 0.0,
            alpha4: 0.0,
            alpha5: 0.0,
            alpha6: 0.0,
            alpha7: 0.0,
            alpha8: 0.0,
            alpha9: 0.0,
            kappa: 0.0,
            hbar: 1.0,
            potential: PotentialSpec::None,
            forcing: None,
        }
    }
}

impl ModelParams {
    /// Legacy couplings of the wave-function sector: `α₁ = α`, `α₂ = β`, `α₅ = −γ`.
    pub fn legacy(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha1: alpha, alpha2: beta, alpha5: -gamma, ..Self::default() }
    }

    /// Sets the scalar-product kinetic couplings from `A`, `B`: `α₆ = A/2`, `α₇ = B/2`.
    pub fn with_gamma_kinetic(mut self, a: f64, b: f64) -> Self {
        self.alpha6 = a / 2.0;
        self.alpha7 = b / 2.0;
        self
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn with_potential(mut self, potential: PotentialSpec) -> Self {
        self.potential = potential;
        self
    }

    /// Plain Schrödinger dynamics: `α₁ = ħ/2`, `α₅ = −1`.
    pub fn schrodinger(hbar: f64) -> Self {
        Self { alpha1: hbar / 2.0, alpha5: -1.0, hbar, ..Self::default() }
    }

    /// Heat-transport analogue: `α = ħ`, `β = −4τħ`, `γ = 2`.
    pub fn kozlov_heat(hbar: f64, tau: f64) -> Self {
        Self::legacy(hbar, -4.0 * tau * hbar, 2.0).with_hbar(hbar)
    }

    /// Killing-metric kinetic term `A = 2n`, `B = −2`. Note `A + nB = 0`.
    pub fn killing(n: usize) -> Self {
        Self::default().with_gamma_kinetic(2.0 * n as f64, -2.0)
    }

    /// Legacy `α`.
    pub fn alpha(&self) -> f64 {
        self.alpha1
    }

    /// Legacy `β`.
    pub fn beta(&self) -> f64 {
        self.alpha2
    }

    /// Legacy `γ`.
    pub fn gamma(&self) -> f64 {
        -self.alpha5
    }

    /// Legacy `A`.
    pub fn kinetic_a(&self) -> f64 {
        2.0 * self.alpha6
    }

    /// Legacy `B`.
    pub fn kinetic_b(&self) -> f64 {
        2.0 * self.alpha7
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.alpha5, self.alpha6,
            self.alpha7, self.alpha8, self.alpha9, self.kappa, self.hbar,
        ];
        if !all.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        if self.hbar <= 0.0 {
            return Err(Error::InvalidInput(format!("hbar must be positive, got {}", self.hbar)));
        }
        Ok(())
    }

    /// `V(θ₁) = κθ₁² + f(θ₁)`.
    pub fn potential_value(&self, theta1: f64) -> f64 {
        self.kappa * theta1 * theta1 + self.potential.value(theta1)
    }

    /// `V′(θ₁)`.
    pub fn potential_derivative(&self, theta1: f64) -> f64 {
        2.0 * self.kappa * theta1 + self.potential.derivative(theta1)
    }

    pub fn forcing_at(&self, t: f64, n: usize) -> Result<Option<CVector>> {
        match &self.forcing {
            None => Ok(None),
            Some(f) => {
                let v = f.at(t);
                if v.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: v.len() });
                }
                Ok(Some(v))
            }
        }
    }
}

/// Configuration-space point `(ψ, ψ̇, Γ, Γ̇)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub psi: CVector,
    pub psi_dot: CVector,
    pub gamma: HermitianForm,
    pub gamma_dot: HermitianForm,
    pub t: f64,
}

impl FullState {
    pub fn new(
        psi: CVector,
        psi_dot: CVector,
        gamma: HermitianForm,
        gamma_dot: HermitianForm,
        t: f64,
    ) -> Result<Self> {
        let n = gamma.dim();
        for found in [psi.len(), psi_dot.len(), gamma_dot.dim()] {
            if found != n {
                return Err(Error::DimensionMismatch { expected: n, found });
            }
        }
        let finite = |v: &CVector| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite(&psi) || !finite(&psi_dot) || !t.is_finite() {
            return Err(Error::NonFinite("state"));
        }
        Ok(Self { psi, psi_dot, gamma, gamma_dot, t })
    }

    /// State with `ψ̇ = 0`, `Γ̇ = 0`.
    pub fn at_rest(psi: CVector, gamma: HermitianForm) -> Result<Self> {
        let n = gamma.dim();
        Self::new(psi, CVector::zeros(n), gamma, HermitianForm::zeros(n), 0.0)
    }

    pub fn dim(&self) -> usize {
        self.gamma.dim()
    }

    /// `θ₁ = ψ†Γψ`.
    pub fn theta1(&self) -> f64 {
        self.gamma.quadratic(&self.psi)
    }
}

fn check_chi(chi: &HermitianForm, n: usize) -> Result<()> {
    if chi.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: chi.dim() });
    }
    Ok(())
}

fn outer(u: &CVector, w: &CVector) -> CMatrix {
    u * w.adjoint()
}

/// Precomputed quantities of the scalar-product kinetic term at `(ψ, Γ)`.
pub(crate) struct Kinetic {
    pub n: usize,
    pub g: CMatrix,
    pub k: CMatrix,
    pub m: CMatrix,
    pub psi: CVector,
    pub rho: CMatrix,
    pub theta1: f64,
    a6: f64,
    a7: f64,
    a8: f64,
    a9: f64,
}

impl Kinetic {
    pub fn new(psi: &CVector, gamma: &HermitianForm, params: &ModelParams) -> Result<Self> {
        let n = gamma.dim();
        if psi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: psi.len() });
        }
        let k = gamma.inverse()?;
        let rho = outer(psi, psi);
        let m = &k + rho.scale(params.alpha9);
        Ok(Self {
            n,
            g: gamma.matrix().clone(),
            k,
            m,
            psi: psi.clone(),
            rho,
            theta1: gamma.quadratic(psi),
            a6: params.alpha6,
            a7: params.alpha7,
            a8: params.alpha8,
            a9: params.alpha9,
        })
    }

    /// `Ω(X)` for a covariant `X`, returned as a contravariant matrix.
    pub fn omega(&self, x: &CMatrix) -> CMatrix {
        let mut out = (&self.m * x * &self.m).scale(self.a6);
        out += &self.m * (c(self.a7) * (&self.m * x).trace());
        out += &self.rho * (c(self.a8) * self.psi.dotc(&(x * &self.psi)));
        out
    }

    /// `dΩ/dt (X)` along `(ψ̇, Γ̇)`, using `Ṁ = −K Γ̇ K + α₉(ψ̇ψ† + ψψ̇†)`.
    pub fn omega_rate(&self, x: &CMatrix, v: &CVector, d: &CMatrix) -> CMatrix {
        let rho_dot = outer(v, &self.psi) + outer(&self.psi, v);
        let m_dot = -(&self.k * d * &self.k) + rho_dot.scale(self.a9);
        let mut out = (&m_dot * x * &self.m + &self.m * x * &m_dot).scale(self.a6);
        out += &self.m * (c(self.a7) * (&m_dot * x).trace());
        out += &m_dot * (c(self.a7) * (&self.m * x).trace());
        let xv = self.psi.dotc(&(x * v)) + v.dotc(&(x * &self.psi));
        out += &self.rho * (c(self.a8) * xv);
        out += rho_dot * (c(self.a8) * self.psi.dotc(&(x * &self.psi)));
        out
    }

    pub fn m_rate(&self, v: &CVector, d: &CMatrix) -> CMatrix {
        let rho_dot = outer(v, &self.psi) + outer(&self.psi, v);
        -(&self.k * d * &self.k) + rho_dot.scale(self.a9)
    }

    fn guard(value: f64, what: &str) -> Result<()> {
        if value.abs() <= DENOMINATOR_EPS {
            return Err(Error::DegenerateKinetic(format!("{what} vanishes ({value:.3e})")));
        }
        Ok(())
    }

    /// Closed-form `Ω⁻¹(Y)` for a contravariant `Y`, returned covariant.
    ///
    /// `Λ(X) = α₆MXM + α₇Tr(MX)M` is inverted with `λ = M⁻¹`, then the rank-one
    /// `α₈` piece is removed by a Sherman–Morrison step.
    pub fn omega_inverse(&self, y: &CMatrix) -> Result<CMatrix> {
        let nf = self.n as f64;
        Self::guard(self.a6, "alpha6")?;
        Self::guard(self.a6 + nf * self.a7, "alpha6 + n alpha7")?;
        let denom9 = 1.0 + self.a9 * self.theta1;
        Self::guard(denom9, "1 + alpha9 theta1")?;
        let lambda_inv_coeff = self.a7 / (self.a6 * (self.a6 + nf * self.a7));
        let theta2 = (self.a6 + (nf - 1.0) * self.a7) / (self.a6 * (self.a6 + nf * self.a7))
            * (self.theta1 / denom9).powi(2);
        let denom8 = 1.0 + self.a8 * theta2;
        Self::guard(denom8, "1 + alpha8 theta2")?;
        Ok(self.omega_inverse_parts(y, lambda_inv_coeff, denom8, denom9))
    }

    fn omega_inverse_parts(&self, y: &CMatrix, coeff: f64, denom8: f64, denom9: f64) -> CMatrix {
        // λ = M⁻¹ = Γ − α₉ Γψψ†Γ / (1 + α₉θ₁), with Γ = K⁻¹
        let g_psi = &self.g * &self.psi;
        let lambda = &self.g - outer(&g_psi, &g_psi).scale(self.a9 / denom9);
        let lambda_inv = |z: &CMatrix| -> CMatrix {
            (&lambda * z * &lambda).scale(1.0 / self.a6) - &lambda * (c(coeff) * (&lambda * z).trace())
        };
        let base = lambda_inv(y);
        if self.a8 == 0.0 {
            return base;
        }
        let u = lambda_inv(&self.rho);
        let proj = self.psi.dotc(&(&base * &self.psi));
        base - u * (c(self.a8 / denom8) * proj)
    }
}

/// `L(ψ, ψ̇, Γ, Γ̇)`; real by construction, the imaginary round-off is discarded.
pub fn lagrangian_value(state: &FullState, params: &ModelParams, chi: &HermitianForm) -> Result<f64> {
    let n = state.dim();
    check_chi(chi, n)?;
    let g = state.gamma.matrix();
    let d = state.gamma_dot.matrix();
    let psi = &state.psi;
    let v = &state.psi_dot;
    let theta1 = state.theta1();

    let mut value = C64::new(0.0, 0.0);
    value += I * params.alpha1 * (psi.dotc(&(g * v)) - v.dotc(&(g * psi)));
    value += params.alpha2 * v.dotc(&(g * v));
    let static_op = g.scale(params.alpha4) + chi.matrix().scale(params.alpha5);
    value += psi.dotc(&(static_op * psi));

    let has_kinetic = params.alpha3 != 0.0
        || params.alpha6 != 0.0
        || params.alpha7 != 0.0
        || params.alpha8 != 0.0;
    if has_kinetic {
        let kin = Kinetic::new(psi, &state.gamma, params)?;
        value += params.alpha3 * (&kin.m * d).trace();
        value += (d * kin.omega(d)).trace();
    }
    value -= params.potential_value(theta1);
    if let Some(f) = params.forcing_at(state.t, n)? {
        value += 2.0 * f.dot(psi).re;
    }
    if !value.re.is_finite() {
        return Err(Error::NonFinite("Lagrangian"));
    }
    Ok(value.re)
}

/// The kinetic tensor `Ω^{bādc̄}` in the layout of [`HermitianTensor4`].
pub fn omega_tensor(
    psi: &CVector,
    gamma: &HermitianForm,
    params: &ModelParams,
) -> Result<HermitianTensor4> {
    let kin = Kinetic::new(psi, gamma, params)?;
    Ok(HermitianTensor4::from_linear_map(kin.n, |x| kin.omega(x)))
}

/// Closed-form inverse of the kinetic tensor.
pub fn omega_inverse(
    psi: &CVector,
    gamma: &HermitianForm,
    params: &ModelParams,
) -> Result<HermitianTensor4> {
    let kin = Kinetic::new(psi, gamma, params)?;
    // probe once to surface the denominator guards
    kin.omega_inverse(&CMatrix::zeros(kin.n, kin.n))?;
    Ok(HermitianTensor4::from_linear_map(kin.n, |y| {
        kin.omega_inverse(y).expect("denominators already checked")
    }))
}

/// Closed-form inverse, falling back to a direct solve on the space of
/// Hermitian matrices when a denominator of the closed form vanishes.
pub fn omega_inverse_or_numeric(
    psi: &CVector,
    gamma: &HermitianForm,
    params: &ModelParams,
) -> Result<HermitianTensor4> {
    match omega_inverse(psi, gamma, params) {
        Err(Error::DegenerateKinetic(reason)) => {
            log::debug!("closed-form kinetic inverse unavailable ({reason}), solving directly");
            crate::oracles::omega_inverse_numeric(psi, gamma, params).map_err(|e| match e {
                Error::SingularOperator => Error::DegenerateKinetic(reason),
                other => other,
            })
        }
        other => other,
    }
}

/// `∂V/∂ψ̄ = f′(θ₁) Γψ` for a potential of the invariant `θ₁`.
pub fn potential_gradient(psi: &CVector, gamma: &HermitianForm, spec: &PotentialSpec) -> CVector {
    let theta1 = gamma.quadratic(psi);
    (gamma.matrix() * psi) * c(spec.derivative(theta1))
}

/// Gradient of the full effective potential `κθ₁² + f(θ₁)`.
pub fn effective_potential_gradient(psi: &CVector, gamma: &HermitianForm, params: &ModelParams) -> CVector {
    let theta1 = gamma.quadratic(psi);
    (gamma.matrix() * psi) * c(params.potential_derivative(theta1))
}

/// `E = α₂ ψ̇†Γψ̇ + Tr(Γ̇ Ω(Γ̇)) − ψ†(α₄Γ + α₅χ)ψ + V(θ₁) − (F·ψ + conj)`.
pub fn energy(state: &FullState, params: &ModelParams, chi: &HermitianForm) -> Result<f64> {
    let n = state.dim();
    check_chi(chi, n)?;
    let g = state.gamma.matrix();
    let d = state.gamma_dot.matrix();
    let psi = &state.psi;
    let v = &state.psi_dot;

    let mut value = params.alpha2 * v.dotc(&(g * v)).re;
    if params.alpha6 != 0.0 || params.alpha7 != 0.0 || params.alpha8 != 0.0 {
        let kin = Kinetic::new(psi, &state.gamma, params)?;
        value += (d * kin.omega(d)).trace().re;
    }
    let static_op = g.scale(params.alpha4) + chi.matrix().scale(params.alpha5);
    value -= psi.dotc(&(static_op * psi)).re;
    value += params.potential_value(state.theta1());
    if let Some(f) = params.forcing_at(state.t, n)? {
        value -= 2.0 * f.dot(psi).re;
    }
    if !value.is_finite() {
        return Err(Error::NonFinite("energy"));
    }
    Ok(value)
}

/// The bracket `[…]` with `iħψ̇ = −(ħ/2α₁) K [...] ψ` in the first-order model,
/// with the `α₃α₉` product passed separately so it may be taken complex.
pub(crate) fn effective_operator(
    state: &FullState,
    params: &ModelParams,
    chi: &HermitianForm,
    a3a9: C64,
) -> Result<CMatrix> {
    let n = state.dim();
    check_chi(chi, n)?;
    let g = state.gamma.matrix();
    let d = state.gamma_dot.matrix();
    let kin = Kinetic::new(&state.psi, &state.gamma, params)?;
    let psi = &state.psi;

    let mut op = d * (I * params.alpha1 + a3a9);
    op += g.scale(params.alpha4) + chi.matrix().scale(params.alpha5);
    let dmd = d * &kin.m * d;
    let tr_md = (&kin.m * d).trace();
    op += (dmd.scale(params.alpha6) + d * (c(params.alpha7) * tr_md)) * c(2.0 * params.alpha9);
    op += d * (c(2.0 * params.alpha8) * psi.dotc(&(d * psi)));
    op -= g.scale(params.potential_derivative(kin.theta1));
    Ok(op)
}

pub(crate) fn effective_hamiltonian_with(
    state: &FullState,
    params: &ModelParams,
    chi: &HermitianForm,
    a3a9: C64,
) -> Result<MixedTensor> {
    if params.alpha1 == 0.0 {
        return Err(Error::ZeroAlpha1);
    }
    let op = effective_operator(state, params, chi, a3a9)?;
    let k = state.gamma.inverse()?;
    MixedTensor::new(k * op * c(-params.hbar / (2.0 * params.alpha1)))
}

/// Generator `H_eff` with `iħψ̇ = H_eff ψ` in the first-order (`α₂ = 0`)
/// model. It reduces to `Γ⁻¹χ` for static `Γ` with `α₁ = ħ/2`, `α₅ = −1`.
pub fn effective_hamiltonian(
    state: &FullState,
    params: &ModelParams,
    chi: &HermitianForm,
) -> Result<MixedTensor> {
    let a3a9 = c(params.alpha3 * params.alpha9);
    effective_hamiltonian_with(state, params, chi, a3a9)
}
