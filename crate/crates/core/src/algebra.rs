//! Complex linear algebra for Hermitian forms.
//!
//! Index conventions: a covariant sesquilinear form `Γ_āb` is stored as a
//! matrix with the barred index as row, so `Γ(u, v) = u^H Γ v`. Contravariant
//! objects such as `Γ^{bā}` or canonical momenta `π^{āb}` are stored with the
//! unbarred index as row, so they pair with velocities through `Tr(P Γ̇)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;

/// Relative hermiticity tolerance applied on construction of a [`HermitianForm`].
pub const HERMITICITY_REL_TOL: f64 = 1e-9;
/// Relative determinant threshold below which a form counts as degenerate.
pub const DETERMINANT_REL_TOL: f64 = 1e-12;

pub(crate) const I: C64 = C64::new(0.0, 1.0);

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Components `ψ^a` of a vector in a fixed basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector(CVector);

impl ComplexVector {
    pub fn new(entries: CVector) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("vector must have at least one component".into()));
        }
        if !entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self(entries))
    }

    pub fn from_slice(entries: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CVector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &CVector {
        &self.0
    }

    pub fn into_inner(self) -> CVector {
        self.0
    }
}

impl std::ops::Deref for ComplexVector {
    type Target = CVector;
    fn deref(&self) -> &CVector {
        &self.0
    }
}

/// A Hermitian `n×n` matrix. Used both for scalar products `Γ` and for
/// Hermitian data such as `χ` or `Γ̇`; nondegeneracy is checked when an
/// inverse is requested.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianForm {
    entries: CMatrix,
}

impl HermitianForm {
    /// Validates hermiticity within `1e-9·‖F‖` and re-symmetrizes.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let tol = HERMITICITY_REL_TOL * entries.norm();
        Self::with_tolerance(entries, tol)
    }

    pub fn with_tolerance(entries: CMatrix, tol: f64) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "Hermitian form must be a nonempty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if !all_finite(&entries) {
            return Err(Error::NonFinite("Hermitian form"));
        }
        let deviation = max_antihermitian_entry(&entries);
        if deviation > tol {
            return Err(Error::NotHermitian { deviation, tolerance: tol });
        }
        Ok(Self { entries: symmetrize(&entries) })
    }

    /// Wraps a square finite matrix without checking or restoring hermiticity.
    /// Integrators use this to keep round-off drift observable.
    pub fn new_unchecked(entries: CMatrix) -> Self {
        debug_assert!(entries.is_square());
        Self { entries }
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: CMatrix::identity(n, n) }
    }

    pub fn zeros(n: usize) -> Self {
        Self { entries: CMatrix::zeros(n, n) }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = CVector::from_iterator(values.len(), values.iter().map(|&x| c(x)));
        Self { entries: CMatrix::from_diagonal(&d) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    /// `‖F − F^H‖ / ‖F‖` in the Frobenius norm (zero for the zero matrix).
    pub fn hermiticity_drift(&self) -> f64 {
        hermiticity_drift(&self.entries)
    }

    pub fn determinant(&self) -> C64 {
        self.entries.determinant()
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(symmetrize(&self.entries)).eigenvalues
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eigenvalues().iter().all(|&l| l > 0.0)
    }

    /// The invariant `θ₁ = Γ_āb ψ̄^ā ψ^b`.
    pub fn quadratic(&self, psi: &CVector) -> f64 {
        psi.dotc(&(&self.entries * psi)).re
    }

    /// Contravariant inverse `Γ^{ac̄}`.
    pub fn inverse(&self) -> Result<CMatrix> {
        let n = self.dim() as i32;
        let threshold = DETERMINANT_REL_TOL * self.entries.norm().powi(n);
        let det = self.entries.determinant().norm();
        if !(det > threshold) {
            return Err(Error::SingularForm { det, threshold });
        }
        self.entries
            .clone()
            .try_inverse()
            .ok_or(Error::SingularForm { det, threshold })
    }
}

impl std::ops::Deref for HermitianForm {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.entries
    }
}

/// A linear operator with one upper and one lower index, e.g. `H^a_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedTensor(CMatrix);

impl MixedTensor {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidInput("mixed tensor must be square".into()));
        }
        if !all_finite(&entries) {
            return Err(Error::NonFinite("mixed tensor"));
        }
        Ok(Self(entries))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

impl std::ops::Deref for MixedTensor {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

fn max_antihermitian_entry(m: &CMatrix) -> f64 {
    (m - m.adjoint()).iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_drift(m: &CMatrix) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        0.0
    } else {
        (m - m.adjoint()).norm() / norm
    }
}

/// True iff the matrix is square and `max |F − F^H| ≤ tol`.
pub fn check_hermitian(f: &CMatrix, tol: f64) -> bool {
    f.is_square() && max_antihermitian_entry(f) <= tol
}

pub fn invert_form(gamma: &HermitianForm) -> Result<HermitianForm> {
    Ok(HermitianForm::new_unchecked(symmetrize(&gamma.inverse()?)))
}

/// `H^a_b = Γ^{ac̄} χ_c̄b`.
pub fn raise_first_index(gamma: &HermitianForm, chi: &HermitianForm) -> Result<MixedTensor> {
    if gamma.dim() != chi.dim() {
        return Err(Error::DimensionMismatch { expected: gamma.dim(), found: chi.dim() });
    }
    MixedTensor::new(gamma.inverse()? * chi.matrix())
}

/// `exp(M t)`.
pub fn matrix_exp(m: &MixedTensor, t: f64) -> Result<MixedTensor> {
    let scaled = m.matrix() * c(t);
    let e = scaled.exp();
    if !all_finite(&e) {
        return Err(Error::NonFinite("matrix exponential"));
    }
    Ok(MixedTensor(e))
}

/// The hatted nonholonomic velocity `Γ^{bc̄} Γ̇_c̄d`.
pub fn gamma_velocity(gamma: &HermitianForm, gamma_dot: &HermitianForm) -> Result<MixedTensor> {
    if gamma.dim() != gamma_dot.dim() {
        return Err(Error::DimensionMismatch { expected: gamma.dim(), found: gamma_dot.dim() });
    }
    MixedTensor::new(gamma.inverse()? * gamma_dot.matrix())
}

/// The companion velocity `Γ̇ Γ^{-1}`, acting on the conjugate slot.
pub fn gamma_velocity_conjugate(
    gamma: &HermitianForm,
    gamma_dot: &HermitianForm,
) -> Result<MixedTensor> {
    if gamma.dim() != gamma_dot.dim() {
        return Err(Error::DimensionMismatch { expected: gamma.dim(), found: gamma_dot.dim() });
    }
    MixedTensor::new(gamma_dot.matrix() * gamma.inverse()?)
}

/// `[Tr M, Tr M², …, Tr M^pmax]`.
pub fn trace_invariants(m: &MixedTensor, pmax: usize) -> Result<Vec<C64>> {
    let n = m.dim();
    if pmax == 0 || pmax > n {
        return Err(Error::InvalidInput(format!("pmax must lie in 1..={n}, got {pmax}")));
    }
    let mut power = m.matrix().clone();
    let mut out = Vec::with_capacity(pmax);
    for p in 1..=pmax {
        out.push(power.trace());
        if p < pmax {
            power = &power * m.matrix();
        }
    }
    Ok(out)
}

/// Splits `Γ = S + iA` into its real symmetric and real antisymmetric parts.
pub fn real_decompose(gamma: &CMatrix) -> Result<(RMatrix, RMatrix)> {
    let tol = HERMITICITY_REL_TOL * gamma.norm();
    let form = HermitianForm::with_tolerance(gamma.clone(), tol)?;
    let s = form.matrix().map(|z| z.re);
    let a = form.matrix().map(|z| z.im);
    Ok((s, a))
}

/// Number of real coordinates of an `n×n` Hermitian matrix.
pub fn hermitian_real_dim(n: usize) -> usize {
    n * n
}

/// Real coordinates of a Hermitian matrix: the diagonal, then the real and
/// imaginary parts of each strictly upper entry in row-major order.
pub fn pack_hermitian(m: &CMatrix) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(m[(i, i)].re);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

pub fn unpack_hermitian(x: &[f64], n: usize) -> CMatrix {
    debug_assert_eq!(x.len(), n * n);
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = c(x[i]);
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = C64::new(x[k], x[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Basis of the real vector space of Hermitian matrices matching
/// [`pack_hermitian`] coordinates.
pub fn hermitian_basis(n: usize) -> Vec<CMatrix> {
    (0..n * n)
        .map(|k| {
            let mut x = vec![0.0; n * n];
            x[k] = 1.0;
            unpack_hermitian(&x, n)
        })
        .collect()
}

/// Hermitian matrix `X` with `Tr(X E_k) = grad[k]` for every Hermitian
/// direction `E_k` of [`hermitian_basis`]. This turns directional
/// derivatives of a real function of a Hermitian argument into its
/// trace-pairing gradient.
pub fn gradient_from_directional(grad: &[f64], n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = c(grad[i]);
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            // Tr(X (E_ij + E_ji)) = 2 Re X_ij, Tr(X i(E_ij − E_ji)) = 2 Im X_ij
            let z = C64::new(grad[k], grad[k + 1]) * 0.5;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Rank-4 array stored as `T[i][j][k][l]` and acting on matrices by
/// `out[i][j] = Σ_kl T[i][j][k][l] · in[l][k]`.
///
/// For the kinetic tensor `Ω^{bādc̄}` the layout is `T[b][a][d][c]`, mapping a
/// covariant velocity `Γ̇_c̄d` to a contravariant matrix. For its inverse
/// `Ω⁻¹_{āb c̄d}` the layout is `T[a][b][c][d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianTensor4 {
    n: usize,
    data: Vec<C64>,
}

impl HermitianTensor4 {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![C64::new(0.0, 0.0); n * n * n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n * n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        data.push(f(i, j, k, l));
                    }
                }
            }
        }
        Self { n, data }
    }

    /// Builds the tensor of a complex-linear matrix map by probing matrix units.
    pub fn from_linear_map(n: usize, map: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let mut t = Self::zeros(n);
        for k in 0..n {
            for l in 0..n {
                let mut unit = CMatrix::zeros(n, n);
                unit[(l, k)] = c(1.0);
                let image = map(&unit);
                for i in 0..n {
                    for j in 0..n {
                        let idx = t.index(i, j, k, l);
                        t.data[idx] = image[(i, j)];
                    }
                }
            }
        }
        t
    }

    fn index(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        self.data[self.index(i, j, k, l)]
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let n = self.n;
        CMatrix::from_fn(n, n, |i, j| {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n {
                for l in 0..n {
                    acc += self.data[self.index(i, j, k, l)] * x[(l, k)];
                }
            }
            acc
        })
    }

    /// `max |T[i][j][k][l] − T[k][l][i][j]|`.
    pub fn pair_symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        worst = worst.max((self.get(i, j, k, l) - self.get(k, l, i, j)).norm());
                    }
                }
            }
        }
        worst
    }

    /// `max |T[j][i][l][k] − conj T[i][j][k][l]|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let d = self.get(j, i, l, k) - self.get(i, j, k, l).conj();
                        worst = worst.max(d.norm());
                    }
                }
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).norm()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }
}
