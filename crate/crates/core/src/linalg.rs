//! Dense complex linear algebra with validated quantum operator roles.
//!
//! Composite systems always put subsystem `A` on the slow (outer) index: the
//! basis state `|a⟩⊗|b⟩` of `H_A ⊗ H_B` lives at position `a·d_B + b`. This is
//! the convention of [`tensor`] and every partial trace, Choi matrix and Fano
//! expansion in the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Absolute tolerance on `max|H − H†|` and `max|U†U − 1|`.
pub const STRUCTURE_TOL: f64 = 1e-12;
/// Tolerance for spectral checks (trace, positivity).
pub const SPECTRAL_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn trace(m: &CMat) -> C64 {
    m.trace()
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_error(m: &CMat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.adjoint()))
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    hermiticity_error(m) <= tol * max_abs(m).max(1.0)
}

/// Real linear combination `Σ x_i σ_i`.
pub fn combine(coeffs: &[f64], ops: &[CMat]) -> CMat {
    assert_eq!(coeffs.len(), ops.len(), "combine: coefficient count");
    let d = ops.first().map(|o| o.nrows()).unwrap_or(0);
    let mut out = CMat::zeros(d, d);
    for (x, op) in coeffs.iter().zip(ops) {
        out += op.scale(*x);
    }
    out
}

/// Frobenius inner product `tr(A† B)`.
pub fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// A Hermitian operator; construction checks `max|H − H†|` against
/// [`STRUCTURE_TOL`] (relative to the largest entry when that exceeds one).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMat);

impl HermitianOperator {
    pub fn new(m: CMat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !is_hermitian(&m, STRUCTURE_TOL) {
            return Err(Error::ContractViolation(format!(
                "operator is not Hermitian (max|H-H†| = {:.3e})",
                hermiticity_error(&m)
            )));
        }
        Ok(Self(hermitian_part(&m)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }
}

/// Hermitian, unit trace, and positive semidefinite down to `-1e-10`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMat);

impl DensityMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        let h = HermitianOperator::new(m)?;
        let tr = h.matrix().trace();
        if (tr.re - 1.0).abs() > STRUCTURE_TOL * h.dim() as f64 || tr.im.abs() > STRUCTURE_TOL {
            return Err(Error::ContractViolation(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        let min = eigh(h.matrix()).values[0];
        if min < -SPECTRAL_TOL {
            return Err(Error::ContractViolation(format!(
                "density matrix has negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self(h.into_inner()))
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) vector.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let v = CVec::from_column_slice(psi);
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let v = v.unscale(n);
        Self::new(&v * v.adjoint())
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self(identity(d).unscale(d as f64))
    }

    /// `(1 + Σ α_i σ_i)/d` from a generalized Bloch vector.
    pub fn from_bloch(basis: &GeneratorBasis, alpha: &[f64]) -> Result<Self> {
        Self::new(bloch_operator(basis, alpha))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }
}

impl AsRef<CMat> for DensityMatrix {
    fn as_ref(&self) -> &CMat {
        &self.0
    }
}

impl AsRef<CMat> for HermitianOperator {
    fn as_ref(&self) -> &CMat {
        &self.0
    }
}

/// `max|U†U − 1| ≤ 1e-12`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOperator(CMat);

impl UnitaryOperator {
    pub fn new(m: CMat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch("unitary must be square".into()));
        }
        let err = max_abs(&(m.adjoint() * &m - identity(m.nrows())));
        if err > STRUCTURE_TOL {
            return Err(Error::ContractViolation(format!(
                "operator is not unitary (max|U†U-1| = {err:.3e})"
            )));
        }
        Ok(Self(m))
    }

    pub fn identity(d: usize) -> Self {
        Self(identity(d))
    }

    /// SWAP on `C^d ⊗ C^d`.
    pub fn swap(d: usize) -> Self {
        let mut m = CMat::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                m[(b * d + a, a * d + b)] = cr(1.0);
            }
        }
        Self(m)
    }

    /// CNOT with the first qubit as control.
    pub fn cnot() -> Self {
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = cr(1.0);
        m[(1, 1)] = cr(1.0);
        m[(2, 3)] = cr(1.0);
        m[(3, 2)] = cr(1.0);
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }

    /// `U X U†`.
    pub fn conjugate(&self, x: &CMat) -> CMat {
        &self.0 * x * self.0.adjoint()
    }
}

/// Traceless Hermitian generators with `tr(σ_i σ_j) = 2 δ_ij`.
#[derive(Debug, Clone)]
pub struct GeneratorBasis {
    d: usize,
    sigmas: Vec<CMat>,
}

impl GeneratorBasis {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn sigmas(&self) -> &[CMat] {
        &self.sigmas
    }

    pub fn get(&self, i: usize) -> &CMat {
        &self.sigmas[i]
    }

    /// `Σ x_i σ_i`.
    pub fn combine(&self, x: &[f64]) -> CMat {
        combine(x, &self.sigmas)
    }

    /// Coefficients `x_i = tr(σ_i X)/2` of the traceless Hermitian part of `X`.
    pub fn coefficients(&self, x: &CMat) -> Vec<f64> {
        self.sigmas
            .iter()
            .map(|s| 0.5 * (s * x).trace().re)
            .collect()
    }

    /// The generators with the identity prepended as `σ_0`.
    pub fn extended(&self) -> Vec<CMat> {
        std::iter::once(identity(self.d))
            .chain(self.sigmas.iter().cloned())
            .collect()
    }
}

/// Generalized Gell-Mann matrices: all symmetric off-diagonal generators, then
/// all antisymmetric ones, then the diagonal ones. For `d = 2` this is exactly
/// `(σx, σy, σz)`.
pub fn generator_basis(d: usize) -> Result<GeneratorBasis> {
    if d < 2 {
        return Err(Error::InvalidDimension(format!(
            "generator basis needs d >= 2, got {d}"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|j| ((j + 1)..d).map(move |k| (j, k)))
        .collect();
    let mut sigmas = Vec::with_capacity(d * d - 1);
    for &(j, k) in &pairs {
        let mut m = CMat::zeros(d, d);
        m[(j, k)] = cr(1.0);
        m[(k, j)] = cr(1.0);
        sigmas.push(m);
    }
    for &(j, k) in &pairs {
        let mut m = CMat::zeros(d, d);
        m[(j, k)] = c(0.0, -1.0);
        m[(k, j)] = c(0.0, 1.0);
        sigmas.push(m);
    }
    for l in 1..d {
        let norm = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut m = CMat::zeros(d, d);
        for j in 0..l {
            m[(j, j)] = cr(norm);
        }
        m[(l, l)] = cr(-(l as f64) * norm);
        sigmas.push(m);
    }
    Ok(GeneratorBasis { d, sigmas })
}

/// The Pauli matrices `(σx, σy, σz)`.
pub fn paulis() -> [CMat; 3] {
    let b = generator_basis(2).expect("d = 2 is valid");
    [b.get(0).clone(), b.get(1).clone(), b.get(2).clone()]
}

/// `(1 + Σ α_i σ_i)/d`; no positivity check.
pub fn bloch_operator(basis: &GeneratorBasis, alpha: &[f64]) -> CMat {
    let d = basis.dim();
    (identity(d) + basis.combine(alpha)).unscale(d as f64)
}

/// Generalized Bloch vector `α_i = (d/2) tr(σ_i ρ)`; inverse of [`bloch_operator`]
/// on unit-trace operators.
pub fn bloch_vector(basis: &GeneratorBasis, rho: &CMat) -> Vec<f64> {
    let scale = basis.dim() as f64 / 2.0;
    basis
        .sigmas()
        .iter()
        .map(|s| scale * (s * rho).trace().re)
        .collect()
}

/// Kronecker product with `A` as the outer (slow) index.
pub fn tensor(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

/// Reduced operator on the `keep` factor of `H_A ⊗ H_B`.
pub fn partial_trace(m: &CMat, dims: (usize, usize), keep: Subsystem) -> Result<CMat> {
    let (da, db) = dims;
    if !m.is_square() || m.nrows() != da * db {
        return Err(Error::DimensionMismatch(format!(
            "partial trace of {}x{} matrix with dims ({da}, {db})",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(match keep {
        Subsystem::A => CMat::from_fn(da, da, |a, a2| {
            (0..db).map(|b| m[(a * db + b, a2 * db + b)]).sum()
        }),
        Subsystem::B => CMat::from_fn(db, db, |b, b2| {
            (0..da).map(|a| m[(a * db + b, a * db + b2)]).sum()
        }),
    })
}

/// `tr_B`, keeping `A`.
pub fn trace_out_b(m: &CMat, dims: (usize, usize)) -> Result<CMat> {
    partial_trace(m, dims, Subsystem::A)
}

/// Partial transpose on the `B` factor.
pub fn partial_transpose_b(m: &CMat, dims: (usize, usize)) -> Result<CMat> {
    let (da, db) = dims;
    if !m.is_square() || m.nrows() != da * db {
        return Err(Error::DimensionMismatch(format!(
            "partial transpose of {}x{} matrix with dims ({da}, {db})",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(CMat::from_fn(da * db, da * db, |r, col| {
        let (a, b) = (r / db, r % db);
        let (a2, b2) = (col / db, col % db);
        m[(a * db + b2, a2 * db + b)]
    }))
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    pub fn vector(&self, k: usize) -> CVec {
        self.vectors.column(k).into_owned()
    }

    /// `Σ f(λ_a) v_a v_a†`.
    pub fn reassemble_with(&self, f: impl Fn(f64) -> C64) -> CMat {
        let n = self.vectors.nrows();
        let mut out = CMat::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let v = self.vectors.column(k);
            out += (v * v.adjoint()) * f(lam);
        }
        out
    }

    pub fn reassemble(&self) -> CMat {
        self.reassemble_with(cr)
    }
}

/// Hermitian eigensolver on the symmetrized input `(H + H†)/2`. No
/// hermiticity check; see [`eig_hermitian`] for the checked entry point.
pub fn eigh(m: &CMat) -> Spectrum {
    let sym = hermitian_part(m);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(m.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    Spectrum { values, vectors }
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigh(m).min()
}

pub fn eig_hermitian(h: &CMat) -> Result<Spectrum> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch("eigensolver needs a square matrix".into()));
    }
    if !is_hermitian(h, STRUCTURE_TOL) {
        return Err(Error::ContractViolation(format!(
            "eigensolver input is not Hermitian (max|H-H†| = {:.3e})",
            hermiticity_error(h)
        )));
    }
    Ok(eigh(h))
}

/// `exp(−iHt)` through the spectral decomposition of `H`.
pub fn unitary_evolve(h: &HermitianOperator, t: f64) -> UnitaryOperator {
    UnitaryOperator(expm_hermitian(h.matrix(), t))
}

pub(crate) fn expm_hermitian(h: &CMat, t: f64) -> CMat {
    eigh(h).reassemble_with(|lam| C64::from_polar(1.0, -lam * t))
}

/// `tr|X|` for Hermitian `X`.
pub fn trace_norm_hermitian(x: &CMat) -> f64 {
    eigh(x).values.iter().map(|l| l.abs()).sum()
}

/// `tr|ρ1 − ρ2|` (ranges over `[0, 2]` for states).
pub fn trace_distance(rho1: &CMat, rho2: &CMat) -> Result<f64> {
    if rho1.shape() != rho2.shape() {
        return Err(Error::DimensionMismatch(format!(
            "trace distance between {:?} and {:?}",
            rho1.shape(),
            rho2.shape()
        )));
    }
    Ok(trace_norm_hermitian(&(rho1 - rho2)))
}

/// Reshape a row-major vector into a `rows × cols` matrix.
pub(crate) fn unvec(v: &[C64], rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |r, col| v[r * cols + col])
}

/// Row-major vectorization.
pub(crate) fn vec_row_major(m: &CMat) -> Vec<C64> {
    let (r, c) = m.shape();
    (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
}
