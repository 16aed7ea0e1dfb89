//! Finite-level Schrödinger-type systems as classical mechanics, including
//! the coupled dynamics of a wave function `ψ` and a dynamical Hermitian
//! scalar product `Γ`.
//!
//! The crate is organised bottom-up:
//!
//! - [`algebra`]: Hermitian forms, inversion, exponentials, trace invariants.
//! - [`models`]: the Lagrangian family, kinetic tensor, potentials, energy.
//! - [`dynamics`]: Euler–Lagrange residuals and right-hand sides per model tier.
//! - [`canonical`]: Legendre maps, Hamiltonians, constraint analysis, Darboux charts.
//! - [`integrate`]: time stepping and trajectory recording.
//! - [`oracles`]: exact solutions and brute-force reference computations.
//! - [`diagnostics`]: energy, norm, hermiticity drift and Noether charges.

pub mod algebra;
pub mod canonical;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod models;
pub mod oracles;

pub use algebra::{CMatrix, CVector, ComplexVector, HermitianForm, HermitianTensor4, MixedTensor, C64};
pub use error::{Error, Result};
pub use models::{FullState, ModelParams, PotentialSpec};
