//! The five batch commands. Each takes a validated [`Run`], writes its files
//! into `dir` and returns a JSON summary for stdout.

use std::path::Path;
use std::sync::Arc;

use hermiton::algebra::{raise_first_index, CMatrix, CVector, HermitianForm, MixedTensor, RMatrix, C64};
use hermiton::canonical::{
    darboux_momentum, darboux_reduce, lagrange_multipliers, legendre_inverse, legendre_regular, reduced_bracket_flow,
};
use hermiton::diagnostics::{monitor, MonitorReport};
use hermiton::dynamics::{el_residual, Residual};
use hermiton::integrate::{integrate_system, ChiSource, ModelTier, TierSystem, Trajectory};
use hermiton::models::{FullState, ModelParams, PotentialSpec};
use hermiton::oracles::{action_gradient_fd, exact_gamma, exact_schrodinger, DiscretePath, GammaExponentialSolution};
use hermiton::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::output::{
    complex_matrix, complex_vector, diagnostics_lines, real_matrix, write_json, write_json_lines, write_trajectory,
    ChargeLine, DriftLine,
};
use crate::scenario::{OutputKind, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Check,
    Reduce,
    Oracle,
    Charges,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Check => "check",
            Command::Reduce => "reduce",
            Command::Oracle => "oracle",
            Command::Charges => "charges",
        }
    }
}

/// Summary printed on stdout plus the exit code it implies.
#[derive(Debug)]
pub struct Outcome {
    pub report: Value,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Self { report, exit_code: 0 }
    }
}

pub fn execute(command: Command, run: &Run, dir: &Path) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(dir)?;
    log::info!("{} [{}] n = {} -> {}", command.name(), run.tier.name(), run.dim(), dir.display());
    match command {
        Command::Simulate => simulate(run, dir),
        Command::Check => check(run, dir),
        Command::Reduce => reduce(run, dir),
        Command::Oracle => oracle(run, dir),
        Command::Charges => charges(run, dir),
    }
}

pub fn trajectory(run: &Run) -> Result<Trajectory, CliError> {
    let sys = TierSystem::new(
        run.tier,
        run.params.clone(),
        ChiSource::Constant(run.chi.clone()),
        &run.initial,
        run.gamma_tilde.clone(),
    )
    .map_err(|e| CliError::tier(run.tier, e))?;
    let traj = integrate_system(&sys, &run.initial, &run.config).map_err(|e| CliError::tier(run.tier, e))?;
    log::debug!("{} samples, last t = {}", traj.len(), traj.times.last().copied().unwrap_or(0.0));
    Ok(traj)
}

fn charge_monitor(run: &Run, traj: &Trajectory) -> Result<MonitorReport, CliError> {
    monitor(traj, &run.params, &ChiSource::Constant(run.chi.clone()), run.gamma0.as_ref(), &run.generators)
        .map_err(|e| CliError::tier(run.tier, e))
}

fn write_charges(path: &Path, report: &MonitorReport) -> Result<(), CliError> {
    let mut lines: Vec<Value> = report.reports.iter().map(|r| serde_json::to_value(ChargeLine::from(r))).collect::<Result<_, _>>()?;
    lines.push(serde_json::to_value(DriftLine::from(&report.summary))?);
    write_json_lines(path, lines)
}

fn simulate(run: &Run, dir: &Path) -> Result<Outcome, CliError> {
    let traj = trajectory(run)?;
    let mut files = Vec::new();
    for kind in &run.outputs {
        match kind {
            OutputKind::Trajectory => {
                write_trajectory(&dir.join("trajectory.csv"), &traj)?;
                files.push("trajectory.csv");
            }
            OutputKind::Diagnostics => {
                write_json_lines(&dir.join("diagnostics.jsonl"), diagnostics_lines(&traj))?;
                files.push("diagnostics.jsonl");
            }
            OutputKind::Charges => {
                write_charges(&dir.join("charges.jsonl"), &charge_monitor(run, &traj)?)?;
                files.push("charges.jsonl");
            }
        }
    }
    Ok(Outcome::ok(json!({
        "command": "simulate",
        "tier": run.tier.name(),
        "samples": traj.len(),
        "t_end": traj.times.last(),
        "max_herm_drift": traj.max_herm_drift(),
        "files": files,
    })))
}

fn charges(run: &Run, dir: &Path) -> Result<Outcome, CliError> {
    let traj = trajectory(run)?;
    let report = charge_monitor(run, &traj)?;
    write_charges(&dir.join("charges.jsonl"), &report)?;
    let mut summary = serde_json::to_value(DriftLine::from(&report.summary))?;
    summary["command"] = json!("charges");
    summary["tier"] = json!(run.tier.name());
    summary["generators"] = json!(run.generators.len());
    Ok(Outcome::ok(summary))
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Serialize)]
pub struct Verdict {
    pub name: &'static str,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl Verdict {
    fn measured(name: &'static str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        let status = if value.is_finite() && value <= tolerance { Status::Pass } else { Status::Fail };
        Self { name, status, value: Some(value), tolerance: Some(tolerance), detail: detail.into() }
    }

    fn skipped(name: &'static str, detail: impl Into<String>) -> Self {
        Self { name, status: Status::Skipped, value: None, tolerance: None, detail: detail.into() }
    }
}

fn check(run: &Run, dir: &Path) -> Result<Outcome, CliError> {
    let tol = &run.check;
    let traj = trajectory(run)?;
    let report = charge_monitor(run, &traj)?;
    let drift = &report.summary;
    let forced = run.params.forcing.is_some();
    let mut verdicts = Vec::new();

    verdicts.push(if forced {
        Verdict::skipped("energy", "forcing makes the energy time dependent")
    } else if run.tier == ModelTier::ModifiedFirstOrder {
        Verdict::skipped("energy", "the modified first-order system conserves its effective Hamiltonian instead")
    } else {
        Verdict::measured("energy", drift.energy, tol.energy_tol, "relative energy drift")
    });

    verdicts.push(match run.tier {
        ModelTier::Schrodinger | ModelTier::DirectNonlinear if !forced => {
            Verdict::measured("theta1", drift.theta1, tol.theta1_tol, "relative drift of psi^H Gamma psi")
        }
        _ => Verdict::skipped("theta1", "the norm is conserved only by the frozen first-order tiers without forcing"),
    });

    verdicts.push(match run.tier {
        ModelTier::Full | ModelTier::GammaGeodesic if !run.generators.is_empty() => {
            let worst = drift.charges.iter().fold(0.0f64, |m, (_, d)| m.max(*d));
            let worst = worst.max(drift.noether_hermiticity);
            Verdict::measured("charges", worst, tol.charge_tol, format!("largest relative drift over {} generators", run.generators.len()))
        }
        ModelTier::Full | ModelTier::GammaGeodesic => Verdict::skipped("charges", "no conserved generators for these couplings"),
        _ => Verdict::skipped("charges", "charges are conserved only when Gamma is dynamical"),
    });

    verdicts.push(Verdict::measured(
        "hermiticity",
        traj.max_herm_drift(),
        tol.hermiticity_tol,
        "largest anti-Hermitian part of Gamma and its velocity before projection",
    ));

    verdicts.push(legendre_verdict(run, tol.legendre_tol));
    verdicts.push(variational_verdict(run)?);

    let failed = verdicts.iter().filter(|v| matches!(v.status, Status::Fail)).count();
    let report = json!({
        "command": "check",
        "tier": run.tier.name(),
        "seed": run.seed,
        "passed": failed == 0,
        "verdicts": verdicts,
    });
    write_json(&dir.join("check.json"), &report)?;
    Ok(Outcome { report, exit_code: if failed == 0 { 0 } else { CliError::ChecksFailed(failed).exit_code() } })
}

fn legendre_verdict(run: &Run, tol: f64) -> Verdict {
    const NAME: &str = "legendre_round_trip";
    if run.params.alpha2 == 0.0 {
        return Verdict::skipped(NAME, "alpha2 = 0: the Legendre map is singular (see reduce)");
    }
    let s = &run.initial;
    let round = legendre_regular(s, &run.params).and_then(|p| legendre_inverse(&p, &run.params));
    match round {
        Ok((v, d)) => {
            let scale = (s.psi_dot.norm() + s.gamma_dot.matrix().norm()).max(1.0);
            let err = ((&v - &s.psi_dot).norm() + (&d - s.gamma_dot.matrix()).norm()) / scale;
            Verdict::measured(NAME, err, tol, "relative velocity error after p(v) and v(p)")
        }
        Err(e) => Verdict::skipped(NAME, e.to_string()),
    }
}

/// Coupling whose sign the fault injection flips: the first nonzero one.
fn flipped(p: &ModelParams) -> ModelParams {
    let mut q = p.clone();
    let slots = [&mut q.alpha1, &mut q.alpha5, &mut q.alpha4, &mut q.alpha2, &mut q.alpha6, &mut q.alpha3];
    if let Some(x) = slots.into_iter().find(|x| **x != 0.0) {
        *x = -*x;
    }
    q
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CVector {
    CVector::from_fn(n, |_, _| C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)));
    (&a + a.adjoint()).scale(0.5)
}

/// Analytic Euler–Lagrange residual against the finite-difference gradient of
/// the discretized action, on a smooth path drawn from the scenario seed.
fn variational_verdict(run: &Run) -> Result<Verdict, CliError> {
    const NAME: &str = "el_vs_fd";
    let n = run.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let (a, b) = (random_vector(&mut rng, n, 1.0), random_vector(&mut rng, n, 0.5));
    let w = rng.gen_range(0.5..2.0);
    let g0 = run.initial.gamma.matrix().clone();
    let g1 = random_hermitian(&mut rng, n, 0.1 * g0.norm());
    let nu = rng.gen_range(0.5..2.0);
    let psi = |t: f64| (&a + &b * C64::from(( w * t).sin()), &b * C64::from(w * (w * t).cos()), &b * C64::from(-w * w * (w * t).sin()));
    let gamma = |t: f64| (&g0 + &g1 * C64::from((nu * t).sin()), &g1 * C64::from(nu * (nu * t).cos()), &g1 * C64::from(-nu * nu * (nu * t).sin()));

    let t = 0.3;
    let (p, v, acc) = psi(t);
    let (g, d, dd) = gamma(t);
    let state = FullState::new(p, v, HermitianForm::new_unchecked(g), HermitianForm::new_unchecked(d), t)
        .map_err(|e| CliError::tier(run.tier, e))?;
    let analytic_params = if run.check.inject_sign_error { flipped(&run.params) } else { run.params.clone() };
    let exact = el_residual(&state, &acc, &dd, &analytic_params, &run.chi).map_err(|e| CliError::tier(run.tier, e))?;
    let dt = 1e-3;
    let path = DiscretePath::sample(t - 4.0 * dt, dt, 9, |tt| (psi(tt).0, gamma(tt).0));
    let fd = action_gradient_fd(&path, &run.params, &run.chi, 4, 1e-5).map_err(|e| CliError::tier(run.tier, e))?;
    let diff = Residual { r_psi: &fd.r_psi - &exact.r_psi, r_gamma: &fd.r_gamma - &exact.r_gamma };
    let scale = exact.norm().max(fd.norm());
    if scale == 0.0 {
        return Ok(Verdict::skipped(NAME, "the residual vanishes identically for these couplings"));
    }
    let detail = if run.check.inject_sign_error {
        "relative |FD - EL| with an injected sign error in the analytic residual"
    } else {
        "relative |FD - EL| of the total Lagrangian on a seeded smooth path"
    };
    Ok(Verdict::measured(NAME, diff.norm() / scale, run.check.oracle_tol, detail))
}

/// `κθ₁² + V(θ₁)` as a single potential, since the constraint analysis
/// takes the potential on its own.
fn combined_potential(params: &ModelParams) -> PotentialSpec {
    if params.kappa == 0.0 {
        return params.potential.clone();
    }
    let (kappa, base) = (params.kappa, params.potential.clone());
    let base_d = base.clone();
    PotentialSpec::Custom {
        f: Arc::new(move |x| kappa * x * x + base.value(x)),
        df: Some(Arc::new(move |x| 2.0 * kappa * x + base_d.derivative(x))),
    }
}

fn reduce(run: &Run, dir: &Path) -> Result<Outcome, CliError> {
    let spec = match run.tier {
        ModelTier::Schrodinger => PotentialSpec::None,
        ModelTier::DirectNonlinear => combined_potential(&run.params),
        other => {
            return Err(CliError::Validation(format!(
                "reduce needs model_tier schrodinger or direct_nonlinear, got {}",
                other.name()
            )))
        }
    };
    let tier_err = |e| CliError::tier(run.tier, e);
    let alpha = run.params.alpha1;
    let gamma_coeff = run.params.gamma();
    let (gamma, chi, psi) = (&run.initial.gamma, &run.chi, &run.initial.psi);
    let g = run.reduce.g.as_ref().map(|rows| {
        let n = rows.len();
        RMatrix::from_fn(n, n, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN))
    });
    if let Some(g) = &g {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Validation("reduce.g must be a finite square matrix".into()));
        }
    }

    let mut chart_error = None;
    let chart = match darboux_reduce(gamma, chi, alpha, gamma_coeff, g.as_ref(), run.reduce.chart) {
        Err(Error::NotPositiveDefinite) if run.reduce.chart => {
            log::info!("canonical chart refused, emitting coefficients only");
            chart_error = Some(Error::NotPositiveDefinite.to_string());
            darboux_reduce(gamma, chi, alpha, gamma_coeff, g.as_ref(), false).map_err(tier_err)?
        }
        other => other.map_err(tier_err)?,
    };
    let multipliers = lagrange_multipliers(psi, gamma, chi, alpha, gamma_coeff, &spec).map_err(tier_err)?;
    let flow = reduced_bracket_flow(psi, gamma, chi, alpha, gamma_coeff, &spec).map_err(tier_err)?;

    let report = json!({
        "command": "reduce",
        "tier": run.tier.name(),
        "alpha": alpha,
        "gamma": gamma_coeff,
        "S": real_matrix(&chart.s),
        "A": real_matrix(&chart.a),
        "sigma": real_matrix(&chart.sigma),
        "alpha_matrix": real_matrix(&chart.alpha_mat),
        "two_form": real_matrix(&chart.two_form),
        "hamiltonian": real_matrix(&chart.hamiltonian),
        "legendre": real_matrix(&chart.legendre),
        "is_darboux": chart.is_darboux,
        "g": real_matrix(&chart.g),
        "g_two_form": real_matrix(&chart.g_two_form),
        "g_hamiltonian": real_matrix(&chart.g_hamiltonian),
        "canonical_basis": chart.canonical_basis.as_ref().map(complex_matrix),
        "canonical_chi": chart.canonical_chi.as_ref().map(complex_matrix),
        "chart_error": chart_error,
        "momentum": complex_vector(&darboux_momentum(psi, gamma, alpha)),
        "multipliers": complex_vector(&multipliers),
        "reduced_flow": complex_vector(&flow),
    });
    write_json(&dir.join("reduce.json"), &report)?;
    Ok(Outcome::ok(report))
}

/// Schrödinger tier as `iħ_eff ψ̇ = Hψ` with `H = ±Γ⁻¹χ`, `ħ_eff = |2α/γ|`.
fn schrodinger_generator(run: &Run) -> Result<(MixedTensor, f64), Error> {
    let gamma_coeff = run.params.gamma();
    let n = run.dim();
    if gamma_coeff == 0.0 {
        return Ok((MixedTensor::new(CMatrix::zeros(n, n))?, 1.0));
    }
    let h = raise_first_index(&run.initial.gamma, &run.chi)?;
    let hbar = 2.0 * run.params.alpha1 / gamma_coeff;
    if hbar > 0.0 {
        Ok((h, hbar))
    } else {
        Ok((MixedTensor::new(-h.into_matrix())?, -hbar))
    }
}

fn oracle(run: &Run, dir: &Path) -> Result<Outcome, CliError> {
    let tier_err = |e| CliError::tier(run.tier, e);
    let n = run.dim();
    // exact values at time t, flattened as (re, im) pairs
    let exact: Box<dyn Fn(f64) -> Result<Vec<C64>, Error>> = match run.tier {
        ModelTier::GammaGeodesic => {
            let sol = GammaExponentialSolution::from_initial(run.initial.gamma.clone(), &run.initial.gamma_dot).map_err(tier_err)?;
            Box::new(move |t| Ok(exact_gamma(&sol, t)?.matrix().transpose().iter().copied().collect()))
        }
        ModelTier::Schrodinger => {
            let (h, hbar) = schrodinger_generator(run).map_err(tier_err)?;
            let psi0 = run.initial.psi.clone();
            Box::new(move |t| Ok(exact_schrodinger(&psi0, &h, hbar, t)?.iter().copied().collect()))
        }
        other => return Err(CliError::NoOracleForTier(other.name())),
    };
    let numeric = |s: &FullState| -> Vec<C64> {
        match run.tier {
            ModelTier::GammaGeodesic => s.gamma.matrix().transpose().iter().copied().collect(),
            _ => s.psi.iter().copied().collect(),
        }
    };
    let labels: Vec<String> = match run.tier {
        ModelTier::GammaGeodesic => (1..=n).flat_map(|a| (1..=n).map(move |b| format!("G_{a}{b}"))).collect(),
        _ => (1..=n).map(|a| format!("psi_{a}")).collect(),
    };

    let traj = trajectory(run)?;
    let mut w = csv::Writer::from_path(dir.join("oracle.csv"))?;
    let mut header = vec!["t".to_string()];
    for side in ["num", "exact"] {
        for l in &labels {
            header.push(format!("{side} Re({l})"));
            header.push(format!("{side} Im({l})"));
        }
    }
    header.push("deviation".into());
    w.write_record(&header)?;
    let (mut max_dev, mut max_rel) = (0.0f64, 0.0f64);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let num = numeric(s);
        let ex = exact(*t).map_err(tier_err)?;
        let dev = num.iter().zip(&ex).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        let size = ex.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        max_dev = max_dev.max(dev);
        max_rel = max_rel.max(if size > 0.0 { dev / size } else { dev });
        let mut row = vec![t.to_string()];
        for z in num.iter().chain(&ex) {
            row.push(z.re.to_string());
            row.push(z.im.to_string());
        }
        row.push(dev.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    let report = json!({
        "command": "oracle",
        "tier": run.tier.name(),
        "samples": traj.len(),
        "max_deviation": max_dev,
        "max_relative_deviation": max_rel,
        "files": ["oracle.csv"],
    });
    Ok(Outcome::ok(report))
}
