mod common;

use common::c;
use hermiton::algebra::{pack_hermitian, symmetrize, unpack_hermitian};
use hermiton::canonical::{hamiltonian, legendre_inverse, legendre_regular};
use hermiton::diagnostics::{gl_transform, noether_tensors};
use hermiton::models::{energy, omega_inverse, omega_tensor};
use hermiton::{CMatrix, CVector, FullState, HermitianForm, ModelParams, C64};
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn cvector(n: usize) -> impl Strategy<Value = CVector> {
    prop::collection::vec(complex(), n).prop_map(CVector::from_vec)
}

fn cmatrix(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec(complex(), n * n).prop_map(move |v| CMatrix::from_vec(n, n, v))
}

fn hermitian(n: usize, scale: f64) -> impl Strategy<Value = HermitianForm> {
    cmatrix(n).prop_map(move |a| HermitianForm::new(symmetrize(&a).scale(scale)).unwrap())
}

fn positive(n: usize) -> impl Strategy<Value = HermitianForm> {
    cmatrix(n).prop_map(move |a| {
        let a = a.scale(0.4);
        HermitianForm::new(&a * a.adjoint() + CMatrix::identity(n, n)).unwrap()
    })
}

fn state(n: usize) -> impl Strategy<Value = FullState> {
    (cvector(n), cvector(n), positive(n), hermitian(n, 0.5))
        .prop_map(|(psi, v, g, d)| FullState::new(psi, v, g, d, 0.0).unwrap())
}

fn params() -> impl Strategy<Value = ModelParams> {
    (
        (0.2..1.0f64, 0.5..1.5f64, -0.5..0.5f64, -0.5..0.5f64, -1.0..0.0f64),
        (0.5..1.5f64, -0.1..0.3f64, -0.2..0.2f64, -0.2..0.2f64, 0.0..0.3f64),
    )
        .prop_map(|((a1, a2, a3, a4, a5), (a6, a7, a8, a9, kappa))| ModelParams {
            alpha1: a1,
            alpha2: a2,
            alpha3: a3,
            alpha4: a4,
            alpha5: a5,
            alpha6: a6,
            alpha7: a7,
            alpha8: a8,
            alpha9: a9,
            kappa,
            ..ModelParams::default()
        })
}

fn sized<T: std::fmt::Debug>(f: impl Fn(usize) -> BoxedStrategy<T>) -> impl Strategy<Value = T> {
    (1usize..=4).prop_flat_map(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hermitian_packing_round_trips(h in sized(|n| hermitian(n, 1.0).boxed())) {
        let n = h.dim();
        let back = unpack_hermitian(&pack_hermitian(h.matrix()), n);
        prop_assert!((back - h.matrix()).norm() == 0.0);
    }

    #[test]
    fn symmetrize_is_an_idempotent_projection(m in sized(|n| cmatrix(n).boxed())) {
        let s = symmetrize(&m);
        prop_assert!((symmetrize(&s) - &s).norm() <= 1e-15 * s.norm().max(1.0));
        prop_assert!((&s - s.adjoint()).norm() == 0.0);
    }

    #[test]
    fn theta1_is_gl_invariant(
        (s, l) in sized(|n| (state(n), cmatrix(n)).boxed())
    ) {
        let n = s.dim();
        let l = l + CMatrix::identity(n, n) * c(2.0);
        let t = gl_transform(&s, &l).unwrap();
        prop_assert!((t.theta1() - s.theta1()).abs() <= 1e-11 * s.theta1().max(1.0));
    }

    #[test]
    fn omega_inverse_inverts_omega(
        (psi, g, x) in sized(|n| (cvector(n), positive(n), hermitian(n, 1.0)).boxed()),
        p in params()
    ) {
        let fwd = omega_tensor(&psi, &g, &p).unwrap();
        let inv = omega_inverse(&psi, &g, &p).unwrap();
        let back = inv.apply(&fwd.apply(x.matrix()));
        prop_assert!((back - x.matrix()).norm() <= 1e-9 * x.matrix().norm().max(1.0));
    }

    #[test]
    fn legendre_round_trip(s in sized(|n| state(n).boxed()), p in params()) {
        let (v, d) = legendre_inverse(&legendre_regular(&s, &p).unwrap(), &p).unwrap();
        prop_assert!((v - &s.psi_dot).norm() <= 1e-10);
        prop_assert!((d - s.gamma_dot.matrix()).norm() <= 1e-10);
    }

    #[test]
    fn hamiltonian_equals_energy(
        (s, chi) in sized(|n| (state(n), hermitian(n, 1.0)).boxed()),
        p in params()
    ) {
        let h = hamiltonian(&legendre_regular(&s, &p).unwrap(), &p, &chi).unwrap();
        let e = energy(&s, &p, &chi).unwrap();
        prop_assert!((h - e).abs() <= 1e-9 * e.abs().max(1.0));
    }

    #[test]
    fn charge_tensors_are_hermitian(s in sized(|n| state(n).boxed()), p in params()) {
        let g0 = s.gamma.clone();
        let (v, w) = noether_tensors(&s, &p, &g0).unwrap();
        prop_assert!((&v - v.adjoint()).norm() <= 1e-12 * v.norm().max(1.0));
        prop_assert!((&w - w.adjoint()).norm() <= 1e-12 * w.norm().max(1.0));
    }
}
