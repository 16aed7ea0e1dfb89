//! Time stepping for every model tier, with trajectory recording.
//!
//! Each tier is packed into a real state vector. `Γ` and `Γ̇` are stored as
//! full complex matrices (real and imaginary part of every entry), so any
//! loss of hermiticity introduced by the stepper stays visible and can be
//! reported before optional re-projection.

use std::sync::Arc;

use crate::algebra::{c, hermiticity_drift, symmetrize, CMatrix, CVector, HermitianForm, C64, I};
use crate::canonical::{constrained_flow, PhasePoint};
use crate::dynamics::{
    modified_first_order_velocity, rhs_direct_nonlinear, rhs_full, rhs_gamma_geodesic,
    rhs_modified_first_order, rhs_schrodinger, rhs_second_order,
};
use crate::error::{Error, Result};
use crate::models::{energy, FullState, ModelParams, PotentialSpec};

const MIDPOINT_MAX_ITER: usize = 50;
const MIDPOINT_TOL: f64 = 1e-12;
const DAMPED_MAX_ITER: usize = 400;
const DAMPING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
    Rk45Adaptive,
    ImplicitMidpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step, or the initial step for the adaptive method.
    pub dt: f64,
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub resymmetrize_gamma: bool,
    pub sample_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: 1e-3,
            t_end: 1.0,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            resymmetrize_gamma: false,
            sample_stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self, t_start: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > t_start) {
            return Err(Error::InvalidInput(format!(
                "t_end ({}) must exceed the start time ({t_start})",
                self.t_end
            )));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidInput("sample_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// A first-order system `ẏ = f(t, y)` over real coordinates.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Measures structural drift of `y` and, when `apply` is set, removes it.
    /// Returns the drift seen before any correction.
    fn project(&self, _y: &mut [f64], _apply: bool) -> f64 {
        0.0
    }
}

/// Raw output of [`solve`]: sampled times and states, with the largest
/// pre-projection drift seen since the previous sample.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub drift: Vec<f64>,
}

fn failure(t: f64, source: Error) -> Error {
    Error::StepFailure { t, source: Box::new(source) }
}

fn check_finite(y: &[f64]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("state"))
    }
}

fn axpy(y: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(y, k)| y + a * k).collect()
}

fn rk4_step(sys: &dyn OdeSystem, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    sys.rhs(t, y, &mut k1)?;
    sys.rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k1), &mut k2)?;
    sys.rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k2), &mut k3)?;
    sys.rhs(t + h, &axpy(y, h, &k3), &mut k4)?;
    Ok((0..n).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

fn midpoint_step(sys: &dyn OdeSystem, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = y.len();
    let mut k = vec![0.0; n];
    sys.rhs(t, y, &mut k)?;
    let mut next = vec![0.0; n];
    let converged = |k: &[f64], next: &[f64]| {
        let diff = k.iter().zip(next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        diff <= MIDPOINT_TOL * (1.0 + scale)
    };
    for _ in 0..MIDPOINT_MAX_ITER {
        sys.rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k), &mut next)?;
        if converged(&k, &next) {
            return Ok(axpy(y, h, &next));
        }
        k.copy_from_slice(&next);
    }
    log::debug!("implicit midpoint at t = {t}: fixed point stalled, switching to damped iteration");
    for _ in 0..DAMPED_MAX_ITER {
        sys.rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k), &mut next)?;
        if converged(&k, &next) {
            return Ok(axpy(y, h, &next));
        }
        for (k, v) in k.iter_mut().zip(&next) {
            *k = (1.0 - DAMPING) * *k + DAMPING * v;
        }
    }
    Err(Error::InvalidInput("implicit midpoint stage equation did not converge".into()))
}

// Dormand–Prince 5(4) tableau
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince attempt; returns the fifth-order solution and the
/// scaled error norm.
fn dp_step(sys: &dyn OdeSystem, t: f64, y: &[f64], h: f64, cfg: &IntegratorConfig) -> Result<(Vec<f64>, f64)> {
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 7];
    for s in 0..7 {
        let mut stage = y.to_vec();
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = DP_A[s][j];
            if a != 0.0 {
                for i in 0..n {
                    stage[i] += h * a * kj[i];
                }
            }
        }
        sys.rhs(t + DP_C[s] * h, &stage, &mut k[s])?;
    }
    let mut high = y.to_vec();
    let mut err = 0.0;
    for i in 0..n {
        let mut hi = 0.0;
        let mut lo = 0.0;
        for s in 0..7 {
            hi += DP_B[s] * k[s][i];
            lo += DP_B_LOW[s] * k[s][i];
        }
        high[i] += h * hi;
        let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(high[i].abs());
        err += (h * (hi - lo) / scale).powi(2);
    }
    Ok((high, (err / n.max(1) as f64).sqrt()))
}

struct Recorder {
    out: OdeSolution,
    stride: usize,
    steps: usize,
    pending_drift: f64,
}

impl Recorder {
    fn new(t0: f64, y0: Vec<f64>, drift0: f64, stride: usize) -> Self {
        Self {
            out: OdeSolution { times: vec![t0], states: vec![y0], drift: vec![drift0] },
            stride,
            steps: 0,
            pending_drift: 0.0,
        }
    }

    fn accept(&mut self, t: f64, y: &[f64], drift: f64, last: bool) {
        self.steps += 1;
        self.pending_drift = self.pending_drift.max(drift);
        if self.steps.is_multiple_of(self.stride) || last {
            self.out.times.push(t);
            self.out.states.push(y.to_vec());
            self.out.drift.push(self.pending_drift);
            self.pending_drift = 0.0;
        }
    }
}

/// Integrates `sys` from `(t0, y0)` to `cfg.t_end`.
///
/// Any error raised by the right-hand side, a non-finite state, or a
/// stalled implicit solve aborts the run with [`Error::StepFailure`]
/// carrying the last time that was reached successfully.
pub fn solve(sys: &dyn OdeSystem, t0: f64, y0: &[f64], cfg: &IntegratorConfig) -> Result<OdeSolution> {
    cfg.validate(t0)?;
    if y0.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: y0.len() });
    }
    check_finite(y0)?;
    let mut y = y0.to_vec();
    let drift0 = sys.project(&mut y, cfg.resymmetrize_gamma);
    let mut rec = Recorder::new(t0, y.clone(), drift0, cfg.sample_stride);
    let span = cfg.t_end - t0;

    match cfg.method {
        Method::Rk4 | Method::ImplicitMidpoint => {
            let steps = ((span / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
            let mut t = t0;
            for k in 0..steps {
                let t_next = if k + 1 == steps { cfg.t_end } else { t0 + (k + 1) as f64 * cfg.dt };
                let h = t_next - t;
                let stepped = match cfg.method {
                    Method::Rk4 => rk4_step(sys, t, &y, h),
                    _ => midpoint_step(sys, t, &y, h),
                };
                let mut next = stepped.map_err(|e| failure(t, e))?;
                check_finite(&next).map_err(|e| failure(t, e))?;
                let drift = sys.project(&mut next, cfg.resymmetrize_gamma);
                y = next;
                t = t_next;
                rec.accept(t, &y, drift, k + 1 == steps);
            }
        }
        Method::Rk45Adaptive => {
            let mut t = t0;
            let mut h = cfg.dt.min(span);
            let mut prev_err: f64 = 1e-4;
            let h_min = 1e-14 * span.max(t0.abs()).max(1.0);
            while t < cfg.t_end {
                let last = t + h >= cfg.t_end * (1.0 - 1e-15) - 1e-300;
                let step_h = if last { cfg.t_end - t } else { h };
                let (mut next, err) = dp_step(sys, t, &y, step_h, cfg).map_err(|e| failure(t, e))?;
                if err <= 1.0 && next.iter().all(|v| v.is_finite()) {
                    let drift = sys.project(&mut next, cfg.resymmetrize_gamma);
                    y = next;
                    t = if last { cfg.t_end } else { t + step_h };
                    rec.accept(t, &y, drift, last);
                    // PI controller
                    let e = err.max(1e-10);
                    let factor = 0.9 * e.powf(-0.7 / 5.0) * prev_err.powf(0.4 / 5.0);
                    h = step_h * factor.clamp(0.2, 5.0);
                    prev_err = e;
                } else {
                    let e = if err.is_finite() { err } else { 1e10 };
                    h = step_h * (0.9 * e.powf(-0.2)).clamp(0.1, 0.9);
                    if h < h_min {
                        return Err(failure(t, Error::InvalidInput(format!("step size underflow ({h:.3e})"))));
                    }
                }
            }
        }
    }
    Ok(rec.out)
}

/// The equation of motion driven by [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelTier {
    /// Linear first-order flow with frozen `Γ`.
    Schrodinger,
    /// Second-order flow of `ψ` with frozen `Γ`.
    SecondOrder,
    /// First-order flow with the `θ₁` potential and forcing, frozen `Γ`.
    DirectNonlinear,
    /// Kinetic-only flow of `Γ`.
    GammaGeodesic,
    /// Coupled second-order flow of `(ψ, Γ)`.
    Full,
    /// First-order `ψ` (`α₂ = 0`) coupled to second-order `Γ`.
    ModifiedFirstOrder,
}

impl ModelTier {
    pub const ALL: [ModelTier; 6] = [
        ModelTier::Schrodinger,
        ModelTier::SecondOrder,
        ModelTier::DirectNonlinear,
        ModelTier::GammaGeodesic,
        ModelTier::Full,
        ModelTier::ModifiedFirstOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelTier::Schrodinger => "schrodinger",
            ModelTier::SecondOrder => "second_order",
            ModelTier::DirectNonlinear => "direct_nonlinear",
            ModelTier::GammaGeodesic => "gamma_geodesic",
            ModelTier::Full => "full",
            ModelTier::ModifiedFirstOrder => "modified_first_order",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    fn has_psi(self) -> bool {
        self != ModelTier::GammaGeodesic
    }

    fn has_psi_dot(self) -> bool {
        matches!(self, ModelTier::SecondOrder | ModelTier::Full)
    }

    fn has_gamma(self) -> bool {
        matches!(self, ModelTier::GammaGeodesic | ModelTier::Full | ModelTier::ModifiedFirstOrder)
    }
}

/// Source of the static Hermitian form `χ`, possibly time dependent.
#[derive(Clone)]
pub enum ChiSource {
    Constant(HermitianForm),
    TimeDependent(Arc<dyn Fn(f64) -> HermitianForm + Send + Sync>),
}

impl std::fmt::Debug for ChiSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChiSource::Constant(chi) => f.debug_tuple("Constant").field(chi).finish(),
            ChiSource::TimeDependent(_) => f.write_str("TimeDependent(..)"),
        }
    }
}

impl ChiSource {
    pub fn at(&self, t: f64) -> HermitianForm {
        match self {
            ChiSource::Constant(chi) => chi.clone(),
            ChiSource::TimeDependent(f) => f(t),
        }
    }
}

impl From<HermitianForm> for ChiSource {
    fn from(chi: HermitianForm) -> Self {
        ChiSource::Constant(chi)
    }
}

fn push_vector(out: &mut Vec<f64>, v: &CVector) {
    for z in v.iter() {
        out.push(z.re);
        out.push(z.im);
    }
}

fn push_matrix(out: &mut Vec<f64>, m: &CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
}

fn read_vector(y: &[f64], n: usize) -> CVector {
    CVector::from_fn(n, |i, _| C64::new(y[2 * i], y[2 * i + 1]))
}

fn read_matrix(y: &[f64], n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| C64::new(y[2 * (i * n + j)], y[2 * (i * n + j) + 1]))
}

fn write_vector(dy: &mut [f64], v: &CVector) {
    for (i, z) in v.iter().enumerate() {
        dy[2 * i] = z.re;
        dy[2 * i + 1] = z.im;
    }
}

fn write_matrix(dy: &mut [f64], m: &CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            dy[2 * (i * n + j)] = m[(i, j)].re;
            dy[2 * (i * n + j) + 1] = m[(i, j)].im;
        }
    }
}

/// A model tier as an [`OdeSystem`]. Variables a tier does not evolve are
/// frozen at their initial values.
pub struct TierSystem {
    tier: ModelTier,
    params: ModelParams,
    chi: ChiSource,
    frozen: FullState,
    gamma_tilde: Option<HermitianForm>,
    n: usize,
}

impl TierSystem {
    pub fn new(
        tier: ModelTier,
        params: ModelParams,
        chi: ChiSource,
        initial: &FullState,
        gamma_tilde: Option<HermitianForm>,
    ) -> Result<Self> {
        params.validate()?;
        let n = initial.dim();
        let chi0 = chi.at(initial.t);
        if chi0.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: chi0.dim() });
        }
        let mut frozen = initial.clone();
        if !tier.has_gamma() {
            frozen.gamma_dot = HermitianForm::zeros(n);
        }
        if tier == ModelTier::GammaGeodesic {
            frozen.psi = CVector::zeros(n);
            frozen.psi_dot = CVector::zeros(n);
        }
        Ok(Self { tier, params, chi, frozen, gamma_tilde, n })
    }

    pub fn tier(&self) -> ModelTier {
        self.tier
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn chi_at(&self, t: f64) -> HermitianForm {
        self.chi.at(t)
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let n = self.n;
        let psi = if self.tier.has_psi() { 2 * n } else { 0 };
        let psi_dot = if self.tier.has_psi_dot() { 2 * n } else { 0 };
        let gamma = if self.tier.has_gamma() { 2 * n * n } else { 0 };
        (psi, psi_dot, gamma, gamma)
    }

    pub fn pack(&self, state: &FullState) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.dim());
        if self.tier.has_psi() {
            push_vector(&mut y, &state.psi);
        }
        if self.tier.has_psi_dot() {
            push_vector(&mut y, &state.psi_dot);
        }
        if self.tier.has_gamma() {
            push_matrix(&mut y, state.gamma.matrix());
            push_matrix(&mut y, state.gamma_dot.matrix());
        }
        y
    }

    /// State at `t` with `ψ̇` filled from the flow for first-order tiers.
    pub fn unpack(&self, t: f64, y: &[f64]) -> Result<FullState> {
        let mut state = self.unpack_raw(t, y);
        match self.tier {
            ModelTier::Schrodinger | ModelTier::DirectNonlinear | ModelTier::ModifiedFirstOrder => {
                let mut dy = vec![0.0; self.dim()];
                self.rhs(t, y, &mut dy)?;
                state.psi_dot = read_vector(&dy, self.n);
            }
            _ => {}
        }
        Ok(state)
    }

    fn unpack_raw(&self, t: f64, y: &[f64]) -> FullState {
        let n = self.n;
        let (p, pd, g, _) = self.offsets();
        let mut state = self.frozen.clone();
        state.t = t;
        if self.tier.has_psi() {
            state.psi = read_vector(y, n);
        }
        if self.tier.has_psi_dot() {
            state.psi_dot = read_vector(&y[p..], n);
        }
        if self.tier.has_gamma() {
            state.gamma = HermitianForm::new_unchecked(read_matrix(&y[p + pd..], n));
            state.gamma_dot = HermitianForm::new_unchecked(read_matrix(&y[p + pd + g..], n));
        }
        state
    }
}

impl OdeSystem for TierSystem {
    fn dim(&self) -> usize {
        let (a, b, c, d) = self.offsets();
        a + b + c + d
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.n;
        let chi = self.chi.at(t);
        let s = self.unpack_raw(t, y);
        let p = &self.params;
        match self.tier {
            ModelTier::Schrodinger => {
                write_vector(dy, &rhs_schrodinger(&s.psi, &s.gamma, &chi, p.alpha1, p.gamma())?);
            }
            ModelTier::DirectNonlinear => {
                write_vector(dy, &rhs_direct_nonlinear(&s.psi, &s.gamma, &chi, p, t)?);
            }
            ModelTier::SecondOrder => {
                let acc = rhs_second_order(&s, &chi, p, self.gamma_tilde.as_ref())?;
                write_vector(dy, &s.psi_dot);
                write_vector(&mut dy[2 * n..], &acc);
            }
            ModelTier::GammaGeodesic => {
                let acc = rhs_gamma_geodesic(&s.gamma, &s.gamma_dot, p.kinetic_a(), p.kinetic_b())?;
                write_matrix(dy, s.gamma_dot.matrix());
                write_matrix(&mut dy[2 * n * n..], &acc);
            }
            ModelTier::Full => {
                let (psi_ddot, gamma_ddot) = rhs_full(&s, p, &chi)?;
                write_vector(dy, &s.psi_dot);
                write_vector(&mut dy[2 * n..], &psi_ddot);
                write_matrix(&mut dy[4 * n..], s.gamma_dot.matrix());
                write_matrix(&mut dy[4 * n + 2 * n * n..], &gamma_ddot);
            }
            ModelTier::ModifiedFirstOrder => {
                let (psi_dot, gamma_ddot) = rhs_modified_first_order(&s, p, &chi)?;
                write_vector(dy, &psi_dot);
                write_matrix(&mut dy[2 * n..], s.gamma_dot.matrix());
                write_matrix(&mut dy[2 * n + 2 * n * n..], &gamma_ddot);
            }
        }
        Ok(())
    }

    fn project(&self, y: &mut [f64], apply: bool) -> f64 {
        if !self.tier.has_gamma() {
            return 0.0;
        }
        let n = self.n;
        let (p, pd, g, _) = self.offsets();
        let mut drift: f64 = 0.0;
        for start in [p + pd, p + pd + g] {
            let m = read_matrix(&y[start..], n);
            drift = drift.max(hermiticity_drift(&m));
            if apply {
                write_matrix(&mut y[start..], &symmetrize(&m));
            }
        }
        drift
    }
}

/// Per-sample scalar diagnostics recorded during integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDiagnostics {
    pub energy: f64,
    pub theta1: f64,
    /// Largest relative anti-Hermitian part of `Γ` or `Γ̇` seen since the
    /// previous sample, measured before any re-projection.
    pub herm_drift: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tier: ModelTier,
    pub times: Vec<f64>,
    pub states: Vec<FullState>,
    pub diagnostics: Vec<SampleDiagnostics>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&FullState> {
        self.states.last()
    }

    pub fn max_herm_drift(&self) -> f64 {
        self.diagnostics.iter().fold(0.0, |m, d| m.max(d.herm_drift))
    }
}

/// Integrates a model tier from a full initial state.
pub fn integrate(
    initial: &FullState,
    tier: ModelTier,
    cfg: &IntegratorConfig,
    params: &ModelParams,
    chi: impl Into<ChiSource>,
) -> Result<Trajectory> {
    let sys = TierSystem::new(tier, params.clone(), chi.into(), initial, None)?;
    integrate_system(&sys, initial, cfg)
}

/// Like [`integrate`], for a prepared [`TierSystem`].
pub fn integrate_system(sys: &TierSystem, initial: &FullState, cfg: &IntegratorConfig) -> Result<Trajectory> {
    let y0 = sys.pack(initial);
    // surface precondition failures before stepping
    let mut probe = vec![0.0; y0.len()];
    sys.rhs(initial.t, &y0, &mut probe)?;
    let sol = solve(sys, initial.t, &y0, cfg)?;
    let mut states = Vec::with_capacity(sol.times.len());
    let mut diagnostics = Vec::with_capacity(sol.times.len());
    for ((t, y), drift) in sol.times.iter().zip(&sol.states).zip(&sol.drift) {
        let state = sys.unpack(*t, y).map_err(|e| failure(*t, e))?;
        let e = energy(&state, &sys.params, &sys.chi.at(*t)).map_err(|e| failure(*t, e))?;
        diagnostics.push(SampleDiagnostics { energy: e, theta1: state.theta1(), herm_drift: *drift });
        states.push(state);
    }
    Ok(Trajectory { tier: sys.tier, times: sol.times, states, diagnostics })
}

/// Canonical `(ψ, π)` flow of the wave-function sector with frozen `Γ`
/// (requires `α₂ ≠ 0`).
pub struct FrozenGammaCanonical {
    pub gamma: HermitianForm,
    pub chi: HermitianForm,
    pub params: ModelParams,
    k: CMatrix,
}

impl FrozenGammaCanonical {
    pub fn new(gamma: HermitianForm, chi: HermitianForm, params: ModelParams) -> Result<Self> {
        if params.alpha2 == 0.0 {
            return Err(Error::ZeroBeta);
        }
        if chi.dim() != gamma.dim() {
            return Err(Error::DimensionMismatch { expected: gamma.dim(), found: chi.dim() });
        }
        let k = gamma.inverse()?;
        Ok(Self { gamma, chi, params, k })
    }

    /// `(ψ̇, π̇)` from the analytic derivatives of the frozen-`Γ` Hamiltonian.
    pub fn flow(&self, t: f64, psi: &CVector, pi: &CVector) -> Result<(CVector, CVector)> {
        let p = &self.params;
        let (a1, a2) = (p.alpha1, p.alpha2);
        let g = self.gamma.matrix();
        let psi_dot = (&self.k * pi.conjugate() + psi * (I * a1)) / c(a2);
        let s = g.scale(p.alpha4 - a1 * a1 / a2) + self.chi.matrix().scale(p.alpha5);
        let dv = p.potential_derivative(self.gamma.quadratic(psi));
        let psi_bar = psi.conjugate();
        let mut pi_dot = pi * (-I * a1 / a2) + s.transpose() * &psi_bar - g.transpose() * psi_bar * c(dv);
        if let Some(f) = p.forcing_at(t, psi.len())? {
            pi_dot += f;
        }
        Ok((psi_dot, pi_dot))
    }

    pub fn pack(&self, psi: &CVector, pi: &CVector) -> Vec<f64> {
        let mut y = Vec::with_capacity(4 * psi.len());
        push_vector(&mut y, psi);
        push_vector(&mut y, pi);
        y
    }

    pub fn unpack(&self, y: &[f64]) -> (CVector, CVector) {
        let n = self.gamma.dim();
        (read_vector(y, n), read_vector(&y[2 * n..], n))
    }
}

impl OdeSystem for FrozenGammaCanonical {
    fn dim(&self) -> usize {
        4 * self.gamma.dim()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.gamma.dim();
        let (psi, pi) = self.unpack(y);
        let (a, b) = self.flow(t, &psi, &pi)?;
        write_vector(dy, &a);
        write_vector(&mut dy[2 * n..], &b);
        Ok(())
    }
}

/// Dirac-constrained `(ψ, π)` flow of the velocity-linear model.
pub struct ConstrainedSystem {
    pub gamma: HermitianForm,
    pub chi: HermitianForm,
    pub alpha: f64,
    pub gamma_coeff: f64,
    pub potential: PotentialSpec,
}

impl ConstrainedSystem {
    pub fn pack(&self, p: &PhasePoint) -> Vec<f64> {
        let mut y = Vec::with_capacity(4 * p.dim());
        push_vector(&mut y, &p.psi);
        push_vector(&mut y, &p.pi);
        y
    }

    pub fn unpack(&self, t: f64, y: &[f64]) -> PhasePoint {
        let n = self.gamma.dim();
        PhasePoint {
            psi: read_vector(y, n),
            pi: read_vector(&y[2 * n..], n),
            gamma: self.gamma.clone(),
            pi_gamma: HermitianForm::zeros(n),
            t,
        }
    }
}

impl OdeSystem for ConstrainedSystem {
    fn dim(&self) -> usize {
        4 * self.gamma.dim()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.gamma.dim();
        let p = self.unpack(t, y);
        let (psi_dot, pi_dot) = constrained_flow(&p, &self.chi, self.alpha, self.gamma_coeff, &self.potential)?;
        write_vector(dy, &psi_dot);
        write_vector(&mut dy[2 * n..], &pi_dot);
        Ok(())
    }
}

/// Phase-space samples produced by [`integrate_constrained`].
#[derive(Debug, Clone)]
pub struct PhaseTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
}

pub fn integrate_constrained(
    sys: &ConstrainedSystem,
    initial: &PhasePoint,
    cfg: &IntegratorConfig,
) -> Result<PhaseTrajectory> {
    let sol = solve(sys, initial.t, &sys.pack(initial), cfg)?;
    let points = sol.times.iter().zip(&sol.states).map(|(t, y)| sys.unpack(*t, y)).collect();
    Ok(PhaseTrajectory { times: sol.times, points })
}

/// Result of a Richardson order estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvergenceOrder {
    Estimated(f64),
    /// Successive differences vanish (e.g. an exactly constant solution).
    Indeterminate,
}

/// Estimates the order of `cfg.method` from endpoint differences of runs with
/// the step sizes in `dt_list` (at least three, in geometric progression).
pub fn convergence_order(sys: &dyn OdeSystem, t0: f64, y0: &[f64], cfg: &IntegratorConfig, dt_list: &[f64]) -> Result<ConvergenceOrder> {
    if dt_list.len() < 3 {
        return Err(Error::InvalidInput("convergence_order needs at least three step sizes".into()));
    }
    let ratio = dt_list[0] / dt_list[1];
    for w in dt_list.windows(2) {
        if !(w[1] > 0.0) || ((w[0] / w[1]) - ratio).abs() > 1e-9 * ratio || ratio <= 1.0 {
            return Err(Error::InvalidInput("step sizes must decrease in geometric progression".into()));
        }
    }
    let mut ends = Vec::with_capacity(dt_list.len());
    for &dt in dt_list {
        let run = IntegratorConfig { dt, sample_stride: usize::MAX / 2, ..cfg.clone() };
        let sol = solve(sys, t0, y0, &run)?;
        ends.push(sol.states.last().cloned().unwrap_or_default());
    }
    let scale = ends.last().map(|y| y.iter().fold(0.0f64, |m, v| m.max(v.abs()))).unwrap_or(0.0).max(1.0);
    let diffs: Vec<f64> = ends
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
        .collect();
    let (d1, d2) = (diffs[diffs.len() - 2], diffs[diffs.len() - 1]);
    if d1 <= 1e-14 * scale || d2 <= 1e-15 * scale {
        return Ok(ConvergenceOrder::Indeterminate);
    }
    Ok(ConvergenceOrder::Estimated((d1 / d2).ln() / ratio.ln()))
}

/// `ψ̇` of the first-order tiers at a recorded state, recomputed from the flow.
pub fn first_order_velocity(tier: ModelTier, state: &FullState, params: &ModelParams, chi: &HermitianForm) -> Result<CVector> {
    match tier {
        ModelTier::Schrodinger => rhs_schrodinger(&state.psi, &state.gamma, chi, params.alpha1, params.gamma()),
        ModelTier::DirectNonlinear => rhs_direct_nonlinear(&state.psi, &state.gamma, chi, params, state.t),
        ModelTier::ModifiedFirstOrder => modified_first_order_velocity(state, params, chi),
        _ => Ok(state.psi_dot.clone()),
    }
}
