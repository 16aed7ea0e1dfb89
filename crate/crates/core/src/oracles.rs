//! Independent ground truth: closed-form solutions and brute-force
//! variational and inversion oracles.

use nalgebra::DVector;

use crate::algebra::{
    c, gradient_from_directional, hermitian_basis, matrix_exp, pack_hermitian, unpack_hermitian,
    CMatrix, CVector, HermitianForm, HermitianTensor4, MixedTensor, RMatrix, C64, I,
};
use crate::dynamics::Residual;
use crate::error::{Error, Result};
use crate::models::{lagrangian_value, omega_tensor, FullState, ModelParams};

/// Relative tolerance on the hermiticity of `G E` (or `F G`).
pub const GENERATOR_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentialSide {
    /// `Γ(t) = G exp(E t)`
    Right,
    /// `Γ(t) = exp(F t) G`
    Left,
}

/// Exponential solution of the scalar-product geodesic equation.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaExponentialSolution {
    g: HermitianForm,
    generator: MixedTensor,
    side: ExponentialSide,
}

impl GammaExponentialSolution {
    /// Requires `G E` (right) or `F G` (left) to be Hermitian, which keeps
    /// `Γ(t)` Hermitian for all `t`.
    pub fn new(g: HermitianForm, generator: MixedTensor, side: ExponentialSide) -> Result<Self> {
        if generator.dim() != g.dim() {
            return Err(Error::DimensionMismatch { expected: g.dim(), found: generator.dim() });
        }
        let product = match side {
            ExponentialSide::Right => g.matrix() * generator.matrix(),
            ExponentialSide::Left => generator.matrix() * g.matrix(),
        };
        let deviation = (&product - product.adjoint()).norm();
        if deviation > GENERATOR_REL_TOL * product.norm().max(f64::MIN_POSITIVE) && deviation > 0.0 {
            return Err(Error::NotGHermitian { deviation });
        }
        Ok(Self { g, generator, side })
    }

    /// The right-sided family through `(G, Γ̇₀)`: `E = G⁻¹ Γ̇₀`.
    pub fn from_initial(g: HermitianForm, gamma_dot: &HermitianForm) -> Result<Self> {
        let e = MixedTensor::new(g.inverse()? * gamma_dot.matrix())?;
        Self::new(g, e, ExponentialSide::Right)
    }

    pub fn g(&self) -> &HermitianForm {
        &self.g
    }

    pub fn generator(&self) -> &MixedTensor {
        &self.generator
    }

    pub fn side(&self) -> ExponentialSide {
        self.side
    }

    /// The equivalent generator of the other side: `F = G E G⁻¹` or `E = G⁻¹ F G`.
    pub fn mirrored(&self) -> Result<Self> {
        let k = self.g.inverse()?;
        let (generator, side) = match self.side {
            ExponentialSide::Right => (self.g.matrix() * self.generator.matrix() * k, ExponentialSide::Left),
            ExponentialSide::Left => (k * self.generator.matrix() * self.g.matrix(), ExponentialSide::Right),
        };
        Self::new(self.g.clone(), MixedTensor::new(generator)?, side)
    }

    fn raw(&self, t: f64) -> Result<CMatrix> {
        let e = matrix_exp(&self.generator, t)?.into_matrix();
        Ok(match self.side {
            ExponentialSide::Right => self.g.matrix() * e,
            ExponentialSide::Left => e * self.g.matrix(),
        })
    }

    /// `Γ̇(t)`.
    pub fn velocity(&self, t: f64) -> Result<CMatrix> {
        let gamma = self.raw(t)?;
        Ok(match self.side {
            ExponentialSide::Right => gamma * self.generator.matrix(),
            ExponentialSide::Left => self.generator.matrix() * gamma,
        })
    }

    /// `Γ̈(t)`.
    pub fn acceleration(&self, t: f64) -> Result<CMatrix> {
        let gamma = self.raw(t)?;
        let e = self.generator.matrix();
        Ok(match self.side {
            ExponentialSide::Right => gamma * e * e,
            ExponentialSide::Left => e * e * gamma,
        })
    }
}

/// `Γ(t)` of an exponential solution.
pub fn exact_gamma(sol: &GammaExponentialSolution, t: f64) -> Result<HermitianForm> {
    let raw = sol.raw(t)?;
    let tol = 1e-10 * raw.norm();
    HermitianForm::with_tolerance(raw, tol.max(f64::MIN_POSITIVE))
}

/// `exp(−iHt/ħ) ψ₀`.
pub fn exact_schrodinger(psi0: &CVector, h: &MixedTensor, hbar: f64, t: f64) -> Result<CVector> {
    if h.dim() != psi0.len() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: psi0.len() });
    }
    if hbar <= 0.0 {
        return Err(Error::InvalidInput("hbar must be positive".into()));
    }
    let generator = MixedTensor::new(h.matrix() * (-I / hbar))?;
    Ok(matrix_exp(&generator, t)?.into_matrix() * psi0)
}

/// A trajectory sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    pub t0: f64,
    pub dt: f64,
    pub psi: Vec<CVector>,
    pub gamma: Vec<CMatrix>,
}

impl DiscretePath {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + self.dt * k as f64
    }

    /// Samples `f(t) = (ψ(t), Γ(t))` at `nodes` points.
    pub fn sample(t0: f64, dt: f64, nodes: usize, f: impl Fn(f64) -> (CVector, CMatrix)) -> Self {
        let (psi, gamma) = (0..nodes).map(|k| f(t0 + dt * k as f64)).unzip();
        Self { t0, dt, psi, gamma }
    }

    fn state_at(&self, k: usize, psi_k: &CVector, gamma_k: &CMatrix, q: &NodeOverride) -> FullState {
        let get_psi = |j: usize| if j == q.node { psi_k.clone() } else { self.psi[j].clone() };
        let get_gamma = |j: usize| if j == q.node { gamma_k.clone() } else { self.gamma[j].clone() };
        let inv = 1.0 / (2.0 * self.dt);
        let (pp, pm) = (get_psi(k + 1), get_psi(k - 1));
        let (gp, gm) = (get_gamma(k + 1), get_gamma(k - 1));
        FullState {
            psi: get_psi(k),
            psi_dot: (pp - pm) * c(inv),
            gamma: HermitianForm::new_unchecked(get_gamma(k)),
            gamma_dot: HermitianForm::new_unchecked((gp - gm) * c(inv)),
            t: self.time(k),
        }
    }
}

struct NodeOverride {
    node: usize,
}

/// Discretized variational derivative `δI/δq` at an interior `node`.
///
/// The action is the trapezoidal sum of `L` with central-difference
/// velocities; only nodes `node−1 … node+1` depend on the varied values.
/// Derivatives are central differences with step `h`, divided by `dt`.
pub fn action_gradient_fd(
    path: &DiscretePath,
    params: &ModelParams,
    chi: &HermitianForm,
    node: usize,
    h: f64,
) -> Result<Residual> {
    if node < 2 || node + 2 >= path.len() {
        return Err(Error::InvalidInput(format!(
            "node {node} needs two neighbours on each side in a path of {} samples",
            path.len()
        )));
    }
    if path.gamma.len() != path.len() {
        return Err(Error::DimensionMismatch { expected: path.len(), found: path.gamma.len() });
    }
    let n = path.psi[node].len();
    let over = NodeOverride { node };
    let local_action = |psi_k: &CVector, gamma_k: &CMatrix| -> Result<f64> {
        let mut sum = 0.0;
        for j in node - 1..=node + 1 {
            sum += lagrangian_value(&path.state_at(j, psi_k, gamma_k, &over), params, chi)?;
        }
        Ok(sum * path.dt)
    };
    let psi0 = &path.psi[node];
    let gamma0 = &path.gamma[node];

    let mut r_psi = CVector::zeros(n);
    for a in 0..n {
        let mut partial = [0.0; 2];
        for (slot, dir) in [c(1.0), I].into_iter().enumerate() {
            let mut plus = psi0.clone();
            let mut minus = psi0.clone();
            plus[a] += dir * h;
            minus[a] -= dir * h;
            partial[slot] = (local_action(&plus, gamma0)? - local_action(&minus, gamma0)?) / (2.0 * h);
        }
        r_psi[a] = C64::new(partial[0], partial[1]) * (0.5 / path.dt);
    }

    let mut directional = Vec::with_capacity(n * n);
    for e in hermitian_basis(n) {
        let plus = gamma0 + &e * c(h);
        let minus = gamma0 - &e * c(h);
        let d = (local_action(psi0, &plus)? - local_action(psi0, &minus)?) / (2.0 * h);
        directional.push(d / path.dt);
    }
    let r_gamma = gradient_from_directional(&directional, n);
    Ok(Residual { r_psi, r_gamma })
}

/// Inverse of the kinetic tensor by a direct linear solve on the real
/// `n²`-dimensional space of Hermitian matrices.
pub fn omega_inverse_numeric(
    psi: &CVector,
    gamma: &HermitianForm,
    params: &ModelParams,
) -> Result<HermitianTensor4> {
    let omega = omega_tensor(psi, gamma, params)?;
    let n = gamma.dim();
    let basis = hermitian_basis(n);
    let dim = basis.len();
    let mut a = RMatrix::zeros(dim, dim);
    for (k, e) in basis.iter().enumerate() {
        let image = omega.apply(e);
        for (i, x) in pack_hermitian(&image).into_iter().enumerate() {
            a[(i, k)] = x;
        }
    }
    let sv = a.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-12 * smax) {
        return Err(Error::SingularOperator);
    }
    let inv = a.try_inverse().ok_or(Error::SingularOperator)?;
    let solve_hermitian = |y: &CMatrix| -> CMatrix {
        let x = &inv * DVector::from_vec(pack_hermitian(y));
        unpack_hermitian(x.as_slice(), n)
    };
    Ok(HermitianTensor4::from_linear_map(n, |p| {
        let h1 = (p + p.adjoint()).scale(0.5);
        let h2 = (p - p.adjoint()) * (-I * 0.5);
        solve_hermitian(&h1) + solve_hermitian(&h2) * I
    }))
}
