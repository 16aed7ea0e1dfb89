//! Python bindings: parameters, tier integration, oracles, charges and the
//! Darboux reduction, plus direct access to the scenario runner.
//!
//! Vectors cross the boundary as `list[complex]`, matrices as
//! `list[list[complex]]` in row-major order.

use std::path::Path;

use hermiton::algebra::{CMatrix, CVector, HermitianForm, RMatrix, C64};
use hermiton::canonical::darboux_reduce as core_darboux;
use hermiton::diagnostics::noether_charge;
use hermiton::integrate::{integrate as core_integrate, IntegratorConfig, Method, ModelTier};
use hermiton::models::{energy as core_energy, FullState, ModelParams, PotentialSpec};
use hermiton::oracles::{exact_gamma as core_exact_gamma, exact_schrodinger as core_exact_schrodinger, GammaExponentialSolution};
use hermiton::{Error, MixedTensor};
use hermiton_cli::{run_file, CliError, Command};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(hermiton, HermitonError, PyValueError, "Invalid input or a failed model evaluation.");
create_exception!(hermiton, StepFailure, HermitonError, "Time stepping could not continue.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::StepFailure { .. } => StepFailure::new_err(e.to_string()),
        other => HermitonError::new_err(other.to_string()),
    }
}

type Matrix = Vec<Vec<C64>>;

fn vector(v: Vec<C64>) -> CVector {
    CVector::from_vec(v)
}

fn matrix(rows: &Matrix) -> PyResult<CMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(HermitonError::new_err(format!("expected a square {n}x{n} matrix")));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn form(rows: &Matrix) -> PyResult<HermitianForm> {
    HermitianForm::new(matrix(rows)?).map_err(to_py)
}

fn rows(m: &CMatrix) -> Matrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn real_rows(m: &RMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn state(psi: Vec<C64>, psi_dot: Option<Vec<C64>>, gamma: &Matrix, gamma_dot: Option<&Matrix>) -> PyResult<FullState> {
    let gamma = form(gamma)?;
    let n = gamma.dim();
    let psi_dot = psi_dot.map(vector).unwrap_or_else(|| CVector::zeros(n));
    let gamma_dot = match gamma_dot {
        Some(d) => form(d)?,
        None => HermitianForm::zeros(n),
    };
    FullState::new(vector(psi), psi_dot, gamma, gamma_dot, 0.0).map_err(to_py)
}

/// Coupling constants `α₁ … α₉`, `κ`, `ħ` and the `θ₁` potential.
#[pyclass(name = "ModelParams", module = "hermiton", get_all, set_all)]
struct PyParams {
    alpha1: f64,
    alpha2: f64,
    alpha3: f64,
    alpha4: f64,
    alpha5: f64,
    alpha6: f64,
    alpha7: f64,
    alpha8: f64,
    alpha9: f64,
    kappa: f64,
    hbar: f64,
    /// `(κ', shift)` of an additional `κ'(θ₁ − shift)²`.
    quartic: Option<(f64, f64)>,
}

impl PyParams {
    fn from_model(p: ModelParams) -> Self {
        Self {
            alpha1: p.alpha1,
            alpha2: p.alpha2,
            alpha3: p.alpha3,
            alpha4: p.alpha4,
            alpha5: p.alpha5,
            alpha6: p.alpha6,
            alpha7: p.alpha7,
            alpha8: p.alpha8,
            alpha9: p.alpha9,
            kappa: p.kappa,
            hbar: p.hbar,
            quartic: None,
        }
    }

    fn model(&self) -> PyResult<ModelParams> {
        let p = ModelParams {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            alpha3: self.alpha3,
            alpha4: self.alpha4,
            alpha5: self.alpha5,
            alpha6: self.alpha6,
            alpha7: self.alpha7,
            alpha8: self.alpha8,
            alpha9: self.alpha9,
            kappa: self.kappa,
            hbar: self.hbar,
            potential: match self.quartic {
                Some((kappa, shift)) => PotentialSpec::QuarticShifted { kappa, shift },
                None => PotentialSpec::None,
            },
            forcing: None,
        };
        p.validate().map_err(to_py)?;
        Ok(p)
    }
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (alpha1=0.0, alpha2=0.0, alpha3=0.0, alpha4=0.0, alpha5=0.0, alpha6=0.0, alpha7=0.0, alpha8=0.0, alpha9=0.0, kappa=0.0, hbar=1.0, quartic=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha1: f64,
        alpha2: f64,
        alpha3: f64,
        alpha4: f64,
        alpha5: f64,
        alpha6: f64,
        alpha7: f64,
        alpha8: f64,
        alpha9: f64,
        kappa: f64,
        hbar: f64,
        quartic: Option<(f64, f64)>,
    ) -> PyResult<Self> {
        let p = Self { alpha1, alpha2, alpha3, alpha4, alpha5, alpha6, alpha7, alpha8, alpha9, kappa, hbar, quartic };
        p.model()?;
        Ok(p)
    }

    #[staticmethod]
    #[pyo3(signature = (hbar=1.0))]
    fn schrodinger(hbar: f64) -> Self {
        Self::from_model(ModelParams::schrodinger(hbar))
    }

    #[staticmethod]
    fn kozlov_heat(hbar: f64, tau: f64) -> Self {
        Self::from_model(ModelParams::kozlov_heat(hbar, tau))
    }

    #[staticmethod]
    fn killing(n: usize) -> Self {
        Self::from_model(ModelParams::killing(n))
    }

    /// `α₁ = α`, `α₂ = β`, `α₅ = −γ`.
    #[staticmethod]
    fn legacy(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self::from_model(ModelParams::legacy(alpha, beta, gamma))
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(alpha1={}, alpha2={}, alpha3={}, alpha4={}, alpha5={}, alpha6={}, alpha7={}, alpha8={}, alpha9={}, kappa={}, hbar={})",
            self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.alpha5, self.alpha6, self.alpha7, self.alpha8,
            self.alpha9, self.kappa, self.hbar
        )
    }
}

/// Sampled run of one model tier.
#[pyclass(name = "Trajectory", module = "hermiton", frozen)]
struct PyTrajectory {
    #[pyo3(get)]
    tier: String,
    #[pyo3(get)]
    times: Vec<f64>,
    #[pyo3(get)]
    psi: Vec<Vec<C64>>,
    #[pyo3(get)]
    gamma: Vec<Matrix>,
    #[pyo3(get)]
    energy: Vec<f64>,
    #[pyo3(get)]
    theta1: Vec<f64>,
    #[pyo3(get)]
    herm_drift: Vec<f64>,
}

#[pymethods]
impl PyTrajectory {
    fn __len__(&self) -> usize {
        self.times.len()
    }

    fn __repr__(&self) -> String {
        format!("Trajectory(tier={:?}, samples={})", self.tier, self.times.len())
    }
}

fn method(name: &str) -> PyResult<Method> {
    match name {
        "rk4" => Ok(Method::Rk4),
        "rk45" => Ok(Method::Rk45Adaptive),
        "implicit_midpoint" => Ok(Method::ImplicitMidpoint),
        other => Err(HermitonError::new_err(format!("unknown method {other:?}; expected rk4, rk45 or implicit_midpoint"))),
    }
}

/// Integrates `tier` from `(ψ, ψ̇, Γ, Γ̇)` at `t = 0` with a constant `χ`.
#[pyfunction]
#[pyo3(signature = (tier, params, chi, psi, gamma, psi_dot=None, gamma_dot=None, dt=1e-3, t_end=1.0, method="rk4", sample_stride=1, rel_tol=1e-9, abs_tol=1e-12))]
#[allow(clippy::too_many_arguments)]
fn integrate(
    tier: &str,
    params: PyRef<'_, PyParams>,
    chi: Matrix,
    psi: Vec<C64>,
    gamma: Matrix,
    psi_dot: Option<Vec<C64>>,
    gamma_dot: Option<Matrix>,
    dt: f64,
    t_end: f64,
    method: &str,
    sample_stride: usize,
    rel_tol: f64,
    abs_tol: f64,
) -> PyResult<PyTrajectory> {
    let tier = ModelTier::from_name(tier).ok_or_else(|| HermitonError::new_err(format!("unknown tier {tier:?}")))?;
    let start = state(psi, psi_dot, &gamma, gamma_dot.as_ref())?;
    let cfg = IntegratorConfig {
        method: self::method(method)?,
        dt,
        t_end,
        rel_tol,
        abs_tol,
        sample_stride,
        ..IntegratorConfig::default()
    };
    let traj = core_integrate(&start, tier, &cfg, &params.model()?, form(&chi)?).map_err(to_py)?;
    Ok(PyTrajectory {
        tier: tier.name().to_string(),
        times: traj.times.clone(),
        psi: traj.states.iter().map(|s| s.psi.iter().copied().collect()).collect(),
        gamma: traj.states.iter().map(|s| rows(s.gamma.matrix())).collect(),
        energy: traj.diagnostics.iter().map(|d| d.energy).collect(),
        theta1: traj.diagnostics.iter().map(|d| d.theta1).collect(),
        herm_drift: traj.diagnostics.iter().map(|d| d.herm_drift).collect(),
    })
}

/// Total energy of the state.
#[pyfunction]
#[pyo3(signature = (params, chi, psi, gamma, psi_dot=None, gamma_dot=None))]
fn energy(
    params: PyRef<'_, PyParams>,
    chi: Matrix,
    psi: Vec<C64>,
    gamma: Matrix,
    psi_dot: Option<Vec<C64>>,
    gamma_dot: Option<Matrix>,
) -> PyResult<f64> {
    let s = state(psi, psi_dot, &gamma, gamma_dot.as_ref())?;
    core_energy(&s, &params.model()?, &form(&chi)?).map_err(to_py)
}

/// `θ₁ = ψ†Γψ`.
#[pyfunction]
fn theta1(psi: Vec<C64>, gamma: Matrix) -> PyResult<f64> {
    let g = form(&gamma)?;
    if psi.len() != g.dim() {
        return Err(to_py(Error::DimensionMismatch { expected: g.dim(), found: psi.len() }));
    }
    Ok(g.quadratic(&vector(psi)))
}

/// `exp(−iHt/ħ) ψ₀`.
#[pyfunction]
fn exact_schrodinger(psi0: Vec<C64>, h: Matrix, hbar: f64, t: f64) -> PyResult<Vec<C64>> {
    let h = MixedTensor::new(matrix(&h)?).map_err(to_py)?;
    Ok(core_exact_schrodinger(&vector(psi0), &h, hbar, t).map_err(to_py)?.iter().copied().collect())
}

/// `Γ(t) = G exp(tG⁻¹Γ̇₀)`, the geodesic through `(G, Γ̇₀)`.
#[pyfunction]
fn exact_gamma(g: Matrix, gamma_dot: Matrix, t: f64) -> PyResult<Matrix> {
    let sol = GammaExponentialSolution::from_initial(form(&g)?, &form(&gamma_dot)?).map_err(to_py)?;
    Ok(rows(core_exact_gamma(&sol, t).map_err(to_py)?.matrix()))
}

/// Noether charges of the given generators relative to `gamma0`.
#[pyfunction]
#[pyo3(signature = (params, psi, gamma, generators, gamma0, psi_dot=None, gamma_dot=None))]
fn noether_charges(
    params: PyRef<'_, PyParams>,
    psi: Vec<C64>,
    gamma: Matrix,
    generators: Vec<Matrix>,
    gamma0: Matrix,
    psi_dot: Option<Vec<C64>>,
    gamma_dot: Option<Matrix>,
) -> PyResult<Vec<f64>> {
    let s = state(psi, psi_dot, &gamma, gamma_dot.as_ref())?;
    let g0 = form(&gamma0)?;
    generators
        .iter()
        .map(|a| noether_charge(&s, &params.model()?, &g0, &matrix(a)?).map_err(to_py))
        .collect()
}

/// Real two-form and Hamiltonian coefficients of the first-order model.
#[pyfunction]
#[pyo3(signature = (gamma, chi, alpha, gamma_coeff, chart=true))]
fn darboux_reduce<'py>(
    py: Python<'py>,
    gamma: Matrix,
    chi: Matrix,
    alpha: f64,
    gamma_coeff: f64,
    chart: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let c = core_darboux(&form(&gamma)?, &form(&chi)?, alpha, gamma_coeff, None, chart).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("S", real_rows(&c.s))?;
    d.set_item("A", real_rows(&c.a))?;
    d.set_item("sigma", real_rows(&c.sigma))?;
    d.set_item("alpha_matrix", real_rows(&c.alpha_mat))?;
    d.set_item("two_form", real_rows(&c.two_form))?;
    d.set_item("hamiltonian", real_rows(&c.hamiltonian))?;
    d.set_item("legendre", real_rows(&c.legendre))?;
    d.set_item("is_darboux", c.is_darboux)?;
    d.set_item("canonical_basis", c.canonical_basis.as_ref().map(rows))?;
    d.set_item("canonical_chi", c.canonical_chi.as_ref().map(rows))?;
    Ok(d)
}

/// Runs a CLI command on one scenario file and returns its JSON report.
#[pyfunction]
#[pyo3(signature = (command, scenario, out, seed=None))]
fn run_scenario(command: &str, scenario: &str, out: &str, seed: Option<u64>) -> PyResult<String> {
    let command = match command {
        "simulate" => Command::Simulate,
        "check" => Command::Check,
        "reduce" => Command::Reduce,
        "oracle" => Command::Oracle,
        "charges" => Command::Charges,
        other => return Err(HermitonError::new_err(format!("unknown command {other:?}"))),
    };
    match run_file(command, Path::new(scenario), Path::new(out), seed) {
        Ok(outcome) => Ok(outcome.report.to_string()),
        Err(e @ CliError::Core { source: Error::StepFailure { .. }, .. }) => Err(StepFailure::new_err(e.to_string())),
        Err(e) => Err(HermitonError::new_err(e.to_string())),
    }
}

#[pymodule]
#[pyo3(name = "hermiton")]
fn hermiton_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(theta1, m)?)?;
    m.add_function(wrap_pyfunction!(exact_schrodinger, m)?)?;
    m.add_function(wrap_pyfunction!(exact_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(noether_charges, m)?)?;
    m.add_function(wrap_pyfunction!(darboux_reduce, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add("HermitonError", m.py().get_type::<HermitonError>())?;
    m.add("StepFailure", m.py().get_type::<StepFailure>())?;
    Ok(())
}
