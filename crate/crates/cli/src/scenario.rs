//! Scenario files: the serialized form and its validation into core types.
//!
//! The serialized structs keep exactly what the file said, so that
//! parse → serialize → parse is the identity. [`Scenario::build`] turns them
//! into validated core values.

use std::fmt;
use std::path::Path;

use hermiton::algebra::{hermitian_basis, CMatrix, CVector, HermitianForm, C64};
use hermiton::diagnostics::{antihermitian_from, Generator};
use hermiton::integrate::{IntegratorConfig, Method, ModelTier};
use hermiton::models::{Forcing, FullState, ModelParams, PotentialSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Relative tolerance used when validating Hermitian literals.
const HERMITIAN_TOL: f64 = 1e-12;

pub type Complex = [f64; 2];

/// A matrix given either as a full `n×n` literal or by name.
///
/// Names: `identity`, `zeros`, `identity:<s>` for `s·I`, and
/// `diag:[d1, d2, ...]` for a real diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Literal(Vec<Vec<Complex>>),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialJson {
    None,
    QuarticShifted { kappa: f64, shift: f64 },
    QuarticPure { kappa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingJson {
    pub amplitude: Vec<Complex>,
    pub omega: f64,
}

/// Explicit couplings, optionally on top of a preset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha4: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha5: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha6: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha7: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha8: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha9: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingJson>,
}

/// `"params": "schrodinger"` or `"params": { ... }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsSpec {
    Preset(String),
    Explicit(Box<ParamsBody>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// Needed only when no vector or matrix literal fixes the dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<Complex>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_dot: Option<Vec<Complex>>,
    #[serde(default = "identity_spec")]
    pub gamma: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_dot: Option<MatrixSpec>,
}

fn identity_spec() -> MatrixSpec {
    MatrixSpec::Named("identity".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Rk4,
    Rk45,
    ImplicitMidpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSpec {
    pub method: MethodName,
    pub dt: f64,
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub resymmetrize_gamma: bool,
    pub sample_stride: usize,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            method: MethodName::Rk4,
            dt: d.dt,
            t_end: d.t_end,
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            resymmetrize_gamma: d.resymmetrize_gamma,
            sample_stride: d.sample_stride,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Trajectory,
    Diagnostics,
    Charges,
}

fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::Trajectory, OutputKind::Diagnostics]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub label: String,
    pub matrix: MatrixSpec,
}

/// Reference product and generators for the Noether charges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChargesSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<MatrixSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<GeneratorSpec>>,
}

/// Tolerances of the invariant suite, plus the fault-injection switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSpec {
    pub energy_tol: f64,
    pub theta1_tol: f64,
    pub charge_tol: f64,
    pub hermiticity_tol: f64,
    pub legendre_tol: f64,
    pub oracle_tol: f64,
    /// Flips the sign of one coupling in the analytic residual so the
    /// finite-difference comparison must fail.
    pub inject_sign_error: bool,
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            energy_tol: 1e-6,
            theta1_tol: 1e-8,
            charge_tol: 1e-6,
            hermiticity_tol: 1e-9,
            legendre_tol: 1e-10,
            oracle_tol: 1e-5,
            inject_sign_error: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceSpec {
    pub chart: bool,
    /// Real metric of the generalized chart; defaults to `2α Re Γ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
}

impl Default for ReduceSpec {
    fn default() -> Self {
        Self { chart: true, g: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model_tier: String,
    pub params: ParamsSpec,
    #[serde(default = "zeros_spec")]
    pub chi: MatrixSpec,
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_tilde: Option<MatrixSpec>,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charges: Option<ChargesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduce: Option<ReduceSpec>,
}

fn zeros_spec() -> MatrixSpec {
    MatrixSpec::Named("zeros".into())
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Run {
    pub tier: ModelTier,
    pub params: ModelParams,
    pub chi: HermitianForm,
    pub initial: FullState,
    pub gamma_tilde: Option<HermitianForm>,
    pub config: IntegratorConfig,
    pub outputs: Vec<OutputKind>,
    pub seed: u64,
    pub gamma0: Option<HermitianForm>,
    pub generators: Vec<Generator>,
    pub check: CheckSpec,
    pub reduce: ReduceSpec,
}

impl Run {
    pub fn dim(&self) -> usize {
        self.initial.dim()
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn tier(&self) -> Result<ModelTier, CliError> {
        ModelTier::from_name(&self.model_tier).ok_or_else(|| {
            let names: Vec<_> = ModelTier::ALL.iter().map(|t| t.name()).collect();
            CliError::Validation(format!("unknown model_tier {:?}; expected one of {}", self.model_tier, names.join(", ")))
        })
    }

    /// Validates every field and resolves presets and named matrices.
    pub fn build(&self) -> Result<Run, CliError> {
        let tier = self.tier()?;
        let n = self.dimension()?;
        let params = build_params(&self.params, n)?;
        let chi = hermitian("chi", &self.chi, n)?;
        let psi = match &self.initial.psi {
            Some(v) => vector("initial.psi", v, n)?,
            None => CVector::zeros(n),
        };
        let psi_dot = match &self.initial.psi_dot {
            Some(v) => vector("initial.psi_dot", v, n)?,
            None => CVector::zeros(n),
        };
        let gamma = hermitian("initial.gamma", &self.initial.gamma, n)?;
        gamma.inverse().map_err(|e| CliError::field("initial.gamma", e))?;
        let gamma_dot = match &self.initial.gamma_dot {
            Some(m) => hermitian("initial.gamma_dot", m, n)?,
            None => HermitianForm::zeros(n),
        };
        let initial = FullState::new(psi, psi_dot, gamma, gamma_dot, 0.0).map_err(|e| CliError::field("initial", e))?;
        let gamma_tilde = match &self.gamma_tilde {
            Some(m) => {
                let gt = hermitian("gamma_tilde", m, n)?;
                gt.inverse().map_err(|e| CliError::field("gamma_tilde", e))?;
                Some(gt)
            }
            None => None,
        };
        let config = self.integrator.to_config();
        config.validate(0.0).map_err(|e| CliError::field("integrator", e))?;

        let charges = self.charges.clone().unwrap_or_default();
        let gamma0 = match &charges.gamma0 {
            Some(m) => {
                let g0 = hermitian("charges.gamma0", m, n)?;
                g0.inverse().map_err(|e| CliError::field("charges.gamma0", e))?;
                Some(g0)
            }
            None => None,
        };
        let generators = match &charges.generators {
            Some(list) => list
                .iter()
                .map(|g| Ok(Generator::new(g.label.clone(), matrix(&format!("generator {}", g.label), &g.matrix, n)?)))
                .collect::<Result<Vec<_>, CliError>>()?,
            None => default_generators(&params, gamma0.as_ref().unwrap_or(&initial.gamma)),
        };

        Ok(Run {
            tier,
            params,
            chi,
            initial,
            gamma_tilde,
            config,
            outputs: self.outputs.clone(),
            seed: self.seed,
            gamma0,
            generators,
            check: self.check.clone().unwrap_or_default(),
            reduce: self.reduce.clone().unwrap_or_default(),
        })
    }

    fn dimension(&self) -> Result<usize, CliError> {
        let literal = |m: &Option<&MatrixSpec>| match m {
            Some(MatrixSpec::Literal(rows)) => Some(rows.len()),
            _ => None,
        };
        let named_diag = |m: &MatrixSpec| match m {
            MatrixSpec::Named(s) => parse_diag(s).ok().flatten().map(|d| d.len()),
            _ => None,
        };
        let candidates = [
            self.initial.dim,
            self.initial.psi.as_ref().map(Vec::len),
            self.initial.psi_dot.as_ref().map(Vec::len),
            literal(&Some(&self.initial.gamma)),
            literal(&self.initial.gamma_dot.as_ref()),
            literal(&Some(&self.chi)),
            named_diag(&self.initial.gamma),
            named_diag(&self.chi),
        ];
        let n = candidates.iter().flatten().copied().next().ok_or_else(|| {
            CliError::Validation("cannot infer the dimension; give initial.psi, a matrix literal or initial.dim".into())
        })?;
        if n == 0 {
            return Err(CliError::Validation("dimension must be at least 1".into()));
        }
        Ok(n)
    }
}

impl IntegratorSpec {
    pub fn to_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            method: match self.method {
                MethodName::Rk4 => Method::Rk4,
                MethodName::Rk45 => Method::Rk45Adaptive,
                MethodName::ImplicitMidpoint => Method::ImplicitMidpoint,
            },
            dt: self.dt,
            t_end: self.t_end,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            resymmetrize_gamma: self.resymmetrize_gamma,
            sample_stride: self.sample_stride,
        }
    }
}

/// Every Hermitian and anti-Hermitian basis direction when the model is
/// `GL(n)`-invariant; otherwise only the global phase `iΓ₀`.
pub fn default_generators(params: &ModelParams, gamma0: &HermitianForm) -> Vec<Generator> {
    if params.forcing.is_some() {
        return Vec::new();
    }
    if params.alpha5 != 0.0 {
        return vec![Generator::new("phase", antihermitian_from(gamma0.matrix()))];
    }
    let n = gamma0.dim();
    let basis = hermitian_basis(n);
    let mut out: Vec<_> = basis.iter().enumerate().map(|(k, h)| Generator::new(format!("h{k}"), h.clone())).collect();
    out.extend(basis.iter().enumerate().map(|(k, h)| Generator::new(format!("ih{k}"), antihermitian_from(h))));
    out
}

fn preset(name: &str, hbar: f64, tau: Option<f64>, n: usize) -> Result<ModelParams, CliError> {
    match name {
        "schrodinger" => Ok(ModelParams::schrodinger(hbar)),
        "kozlov_heat" | "kozlov-heat" => {
            let tau = tau.ok_or_else(|| CliError::Validation("preset kozlov_heat needs params.tau".into()))?;
            Ok(ModelParams::kozlov_heat(hbar, tau))
        }
        "killing" => Ok(ModelParams::killing(n).with_hbar(hbar)),
        other => Err(CliError::Validation(format!(
            "unknown preset {other:?}; expected schrodinger, kozlov_heat or killing"
        ))),
    }
}

fn build_params(spec: &ParamsSpec, n: usize) -> Result<ModelParams, CliError> {
    let body = match spec {
        ParamsSpec::Preset(name) => ParamsBody { preset: Some(name.clone()), ..ParamsBody::default() },
        ParamsSpec::Explicit(b) => (**b).clone(),
    };
    let hbar = body.hbar.unwrap_or(1.0);
    let mut p = match &body.preset {
        Some(name) => preset(name, hbar, body.tau, n)?,
        None => ModelParams::default().with_hbar(hbar),
    };
    let slots: [(&Option<f64>, &mut f64); 10] = [
        (&body.alpha1, &mut p.alpha1),
        (&body.alpha2, &mut p.alpha2),
        (&body.alpha3, &mut p.alpha3),
        (&body.alpha4, &mut p.alpha4),
        (&body.alpha5, &mut p.alpha5),
        (&body.alpha6, &mut p.alpha6),
        (&body.alpha7, &mut p.alpha7),
        (&body.alpha8, &mut p.alpha8),
        (&body.alpha9, &mut p.alpha9),
        (&body.kappa, &mut p.kappa),
    ];
    for (value, slot) in slots {
        if let Some(v) = value {
            *slot = *v;
        }
    }
    if let Some(pot) = &body.potential {
        p.potential = match *pot {
            PotentialJson::None => PotentialSpec::None,
            PotentialJson::QuarticShifted { kappa, shift } => PotentialSpec::QuarticShifted { kappa, shift },
            PotentialJson::QuarticPure { kappa } => PotentialSpec::QuarticPure { kappa },
        };
    }
    if let Some(f) = &body.forcing {
        p.forcing = Some(Forcing::Harmonic { amplitude: vector("params.forcing.amplitude", &f.amplitude, n)?, omega: f.omega });
    }
    p.validate().map_err(|e| CliError::field("params", e))?;
    Ok(p)
}

fn finite(what: &str, z: Complex) -> Result<C64, CliError> {
    if z[0].is_finite() && z[1].is_finite() {
        Ok(C64::new(z[0], z[1]))
    } else {
        Err(CliError::Validation(format!("{what}: NonFinite entry {z:?}")))
    }
}

fn vector(what: &str, v: &[Complex], n: usize) -> Result<CVector, CliError> {
    if v.len() != n {
        return Err(CliError::Validation(format!("{what}: DimensionMismatch: expected {n}, found {}", v.len())));
    }
    let entries = v.iter().map(|z| finite(what, *z)).collect::<Result<Vec<_>, _>>()?;
    Ok(CVector::from_vec(entries))
}

/// `Some(values)` for `diag:[...]`, `None` for other names.
fn parse_diag(name: &str) -> Result<Option<Vec<f64>>, String> {
    match name.strip_prefix("diag:") {
        Some(rest) => serde_json::from_str::<Vec<f64>>(rest.trim())
            .map(Some)
            .map_err(|e| format!("bad diagonal {rest:?}: {e}")),
        None => Ok(None),
    }
}

fn matrix(what: &str, spec: &MatrixSpec, n: usize) -> Result<CMatrix, CliError> {
    match spec {
        MatrixSpec::Literal(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(CliError::Validation(format!("{what}: DimensionMismatch: expected a {n}x{n} matrix")));
            }
            let mut m = CMatrix::zeros(n, n);
            for (i, row) in rows.iter().enumerate() {
                for (j, z) in row.iter().enumerate() {
                    m[(i, j)] = finite(what, *z)?;
                }
            }
            Ok(m)
        }
        MatrixSpec::Named(name) => {
            let bad = |msg: String| CliError::Validation(format!("{what}: {msg}"));
            if let Some(d) = parse_diag(name).map_err(bad)? {
                if d.len() != n {
                    return Err(bad(format!("DimensionMismatch: expected {n}, found {}", d.len())));
                }
                return Ok(HermitianForm::diagonal(&d).into_matrix());
            }
            match name.as_str() {
                "identity" => Ok(CMatrix::identity(n, n)),
                "zeros" => Ok(CMatrix::zeros(n, n)),
                _ => match name.strip_prefix("identity:").map(|s| s.trim().parse::<f64>()) {
                    Some(Ok(s)) if s.is_finite() => Ok(CMatrix::identity(n, n).scale(s)),
                    _ => Err(bad(format!("unknown matrix name {name:?}"))),
                },
            }
        }
    }
}

fn hermitian(what: &str, spec: &MatrixSpec, n: usize) -> Result<HermitianForm, CliError> {
    let m = matrix(what, spec, n)?;
    let tol = HERMITIAN_TOL * m.norm().max(1.0);
    HermitianForm::with_tolerance(m, tol).map_err(|e| CliError::field(what, e))
}

impl fmt::Display for OutputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputKind::Trajectory => "trajectory",
            OutputKind::Diagnostics => "diagnostics",
            OutputKind::Charges => "charges",
        })
    }
}
