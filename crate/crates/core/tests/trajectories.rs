mod common;

use common::*;
use hermiton::algebra::MixedTensor;
use hermiton::diagnostics::{monitor, Generator};
use hermiton::dynamics::rhs_second_order;
use hermiton::integrate::{integrate, integrate_system, ChiSource, IntegratorConfig, Method, ModelTier, TierSystem};
use hermiton::models::effective_hamiltonian;
use hermiton::oracles::{exact_gamma, ExponentialSide, GammaExponentialSolution};
use hermiton::{CMatrix, CVector, Error, FullState, HermitianForm, ModelParams};
use std::sync::Arc;

fn cfg(dt: f64, t_end: f64) -> IntegratorConfig {
    IntegratorConfig { dt, t_end, sample_stride: 10, ..IntegratorConfig::default() }
}

#[test]
fn left_exponential_family_is_reproduced() {
    let mut rng = rng(200);
    let g = positive(&mut rng, 3);
    let f = form(hermitian(&mut rng, 3, 0.5));
    let e = MixedTensor::new(g.inverse().unwrap() * f.matrix()).unwrap();
    let right = GammaExponentialSolution::new(g.clone(), e, ExponentialSide::Right).unwrap();
    let left = right.mirrored().unwrap();
    assert_eq!(left.side(), ExponentialSide::Left);
    let start = FullState::new(CVector::zeros(3), CVector::zeros(3), g, form(left.velocity(0.0).unwrap()), 0.0).unwrap();
    let p = ModelParams::default().with_gamma_kinetic(1.0, 0.5);
    let traj = integrate(&start, ModelTier::GammaGeodesic, &cfg(1e-3, 1.0), &p, HermitianForm::zeros(3)).unwrap();
    let exact = exact_gamma(&left, 1.0).unwrap();
    assert!((traj.last().unwrap().gamma.matrix() - exact.matrix()).norm() < 1e-8);
}

#[test]
fn degenerate_kinetic_couplings_are_refused() {
    let n = 2;
    let start = FullState::at_rest(CVector::zeros(n), HermitianForm::identity(n)).unwrap();
    let r = integrate(&start, ModelTier::GammaGeodesic, &cfg(1e-3, 1.0), &ModelParams::killing(n), HermitianForm::zeros(n));
    assert!(matches!(r, Err(Error::DegenerateKinetic(_))));
}

#[test]
fn second_order_tier_with_separate_kinetic_metric() {
    let mut rng = rng(201);
    let n = 2;
    let g = positive(&mut rng, n);
    let gt = positive(&mut rng, n);
    let chi = form(hermitian(&mut rng, n, 1.0));
    let p = ModelParams::legacy(0.7, 0.5, 2.0);
    let start = FullState::new(vector(&mut rng, n, 1.0), vector(&mut rng, n, 0.3), g, HermitianForm::zeros(n), 0.0).unwrap();
    let sys = TierSystem::new(ModelTier::SecondOrder, p.clone(), chi.clone().into(), &start, Some(gt.clone())).unwrap();
    let traj = integrate_system(&sys, &start, &cfg(1e-3, 0.5)).unwrap();
    // the recorded acceleration is the Γ̃ one
    let s = &traj.states[3];
    let acc = rhs_second_order(s, &chi, &p, Some(&gt)).unwrap();
    let plain = rhs_second_order(s, &chi, &p, None).unwrap();
    assert!((acc - plain).norm() > 1e-6);
    // without Γ̃ the frozen-Γ second-order energy is conserved
    let traj = integrate(&start, ModelTier::SecondOrder, &cfg(1e-3, 2.0), &p, chi.clone()).unwrap();
    let r = monitor(&traj, &p, &ChiSource::Constant(chi), None, &[]).unwrap();
    assert!(r.summary.energy < 1e-9, "{}", r.summary.energy);
}

#[test]
fn modified_first_order_run_follows_effective_hamiltonian() {
    let mut rng = rng(202);
    let n = 2;
    let p = ModelParams {
        alpha1: 0.5,
        alpha2: 0.0,
        alpha3: 0.1,
        alpha4: 0.0,
        alpha5: -1.0,
        alpha6: 1.0,
        alpha7: 0.1,
        alpha9: 0.1,
        ..ModelParams::default()
    };
    let chi = form(hermitian(&mut rng, n, 1.0));
    let start = FullState::new(vector(&mut rng, n, 1.0), CVector::zeros(n), positive(&mut rng, n), form(hermitian(&mut rng, n, 0.1)), 0.0).unwrap();
    let traj = integrate(&start, ModelTier::ModifiedFirstOrder, &cfg(1e-3, 0.5), &p, chi.clone()).unwrap();
    for s in &traj.states {
        let h = effective_hamiltonian(s, &p, &chi).unwrap();
        let expected = h.matrix() * &s.psi / hermiton::C64::new(0.0, p.hbar);
        assert!((&s.psi_dot - expected).norm() < 1e-10);
    }
    assert!(matches!(
        integrate(&start, ModelTier::ModifiedFirstOrder, &cfg(1e-3, 0.5), &ModelParams { alpha2: 1.0, ..p }, chi),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn charges_with_static_coupling_for_commuting_generators() {
    // α₅ ≠ 0 breaks GL invariance; diagonal phase rotations still commute with a diagonal χ at Γ₀ = I
    let mut rng = rng(203);
    let n = 3;
    let p = ModelParams {
        alpha1: 0.5,
        alpha2: 1.0,
        alpha3: 0.2,
        alpha5: -0.3,
        alpha6: 1.0,
        alpha7: 0.2,
        alpha8: 0.1,
        alpha9: 0.1,
        kappa: 0.5,
        ..ModelParams::default()
    };
    let chi = HermitianForm::diagonal(&[0.5, -0.2, 1.0]);
    let mut start = state(&mut rng, n, 0.1);
    start.gamma = HermitianForm::identity(n);
    let traj = integrate(&start, ModelTier::Full, &cfg(1e-3, 5.0), &p, chi.clone()).unwrap();
    let phase = |k: usize| {
        let mut m = CMatrix::zeros(n, n);
        m[(k, k)] = hermiton::C64::new(0.0, 1.0);
        Generator::new(format!("phase{k}"), m)
    };
    let gens: Vec<_> = (0..n).map(phase).collect();
    let r = monitor(&traj, &p, &ChiSource::Constant(chi), Some(&HermitianForm::identity(n)), &gens).unwrap();
    for (label, drift) in &r.summary.charges {
        assert!(*drift < 1e-6, "{label}: {drift}");
    }
}

#[test]
fn time_dependent_chi_is_sampled_at_each_stage() {
    // iħψ̇ = E(t)ψ with E(t) = 1 + t has the phase ∫E = t + t²/2
    let start = FullState::at_rest(CVector::from_vec(vec![c(1.0)]), HermitianForm::identity(1)).unwrap();
    let chi = ChiSource::TimeDependent(Arc::new(|t| HermitianForm::diagonal(&[1.0 + t])));
    let traj = integrate(&start, ModelTier::Schrodinger, &cfg(1e-3, 1.0), &ModelParams::schrodinger(1.0), chi).unwrap();
    let expected = hermiton::C64::from_polar(1.0, -1.5);
    assert!((traj.last().unwrap().psi[0] - expected).norm() < 1e-10);
}

#[test]
fn adaptive_full_model_run() {
    let mut rng = rng(204);
    let p = ModelParams { alpha4: 0.0, alpha5: -0.3, kappa: 0.5, ..generic_params(&mut rng) };
    let chi = form(hermitian(&mut rng, 2, 1.0));
    let start = state(&mut rng, 2, 0.1);
    let c = IntegratorConfig { method: Method::Rk45Adaptive, dt: 1e-2, t_end: 2.0, rel_tol: 1e-10, abs_tol: 1e-12, ..IntegratorConfig::default() };
    let traj = integrate(&start, ModelTier::Full, &c, &p, chi.clone()).unwrap();
    let r = monitor(&traj, &p, &ChiSource::Constant(chi), None, &[]).unwrap();
    assert!(r.summary.energy < 1e-7, "{}", r.summary.energy);
}
