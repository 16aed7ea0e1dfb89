#![allow(dead_code)]

use hermiton::algebra::RMatrix;
use hermiton::{CMatrix, CVector, FullState, HermitianForm, ModelParams, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CVector {
    CVector::from_fn(n, |_, _| C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
}

pub fn matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
}

pub fn hermitian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMatrix {
    let a = matrix(rng, n, scale);
    (&a + a.adjoint()).scale(0.5)
}

/// `I + AA†` with small `A`: positive definite and well conditioned.
pub fn positive(rng: &mut ChaCha8Rng, n: usize) -> HermitianForm {
    let a = matrix(rng, n, 0.4);
    HermitianForm::new(&a * a.adjoint() + CMatrix::identity(n, n)).unwrap()
}

pub fn form(m: CMatrix) -> HermitianForm {
    HermitianForm::new(m).unwrap()
}

/// Generic couplings with every term switched on and a nondegenerate kinetic tensor.
pub fn generic_params(rng: &mut ChaCha8Rng) -> ModelParams {
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

pub fn state(rng: &mut ChaCha8Rng, n: usize, velocity: f64) -> FullState {
    let d = form(hermitian(rng, n, velocity));
    FullState::new(vector(rng, n, 1.0), vector(rng, n, velocity), positive(rng, n), d, 0.0).unwrap()
}

pub fn real_from_rows(n: usize, rows: &[f64]) -> RMatrix {
    RMatrix::from_row_slice(n, n, rows)
}
