//! Fano-form coefficients of bipartite operators and assignment (extension)
//! maps `ρ ↦ τ_AB` with `tr_B τ = ρ`.
//!
//! With generators normalized to `tr(σ_i σ_j) = 2δ_ij`, a bipartite operator is
//!
//! ```text
//! τ = (1 + Σ α_i σ_i⊗1 + Σ β_j 1⊗σ_j + Σ γ_ij σ_i⊗σ_j) / (d_A d_B)
//! ```
//!
//! and the coefficients are recovered as `α_i = (d_A/2) tr((σ_i⊗1)τ)`,
//! `β_j = (d_B/2) tr((1⊗σ_j)τ)`, `γ_ij = (d_A d_B/4) tr((σ_i⊗σ_j)τ)`. For
//! qubits the prefactors are all one.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    bloch_vector, eigh, generator_basis, identity, is_hermitian, partial_trace, tensor, CMat,
    DensityMatrix, GeneratorBasis, Subsystem, UnitaryOperator, SPECTRAL_TOL,
};
use crate::random;

pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

fn dim_from_generator_count(n: usize) -> Option<usize> {
    let d = ((n + 1) as f64).sqrt().round() as usize;
    (d >= 2 && d * d == n + 1).then_some(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FanoState {
    pub d_a: usize,
    pub d_b: usize,
    pub alpha: RVec,
    pub beta: RVec,
    pub gamma: RMat,
}

/// `Γ = (γ − α βᵀ)/(d_A d_B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTensor {
    pub d_a: usize,
    pub d_b: usize,
    pub gamma: RMat,
}

impl CorrelationTensor {
    pub fn zeros(d_a: usize, d_b: usize) -> Self {
        Self { d_a, d_b, gamma: RMat::zeros(d_a * d_a - 1, d_b * d_b - 1) }
    }

    /// `g = d_A d_B Γ`.
    pub fn g(&self) -> RMat {
        self.gamma.scale((self.d_a * self.d_b) as f64)
    }

    /// `Σ Γ_ij σ_i ⊗ σ_j`, the part of `τ` not captured by `ρ ⊗ ω`.
    pub fn operator(&self) -> CMat {
        let ba = generator_basis(self.d_a).expect("d_a >= 2");
        let bb = generator_basis(self.d_b).expect("d_b >= 2");
        let mut out = CMat::zeros(self.d_a * self.d_b, self.d_a * self.d_b);
        for (i, si) in ba.sigmas().iter().enumerate() {
            for (j, sj) in bb.sigmas().iter().enumerate() {
                let w = self.gamma[(i, j)];
                if w != 0.0 {
                    out += tensor(si, sj).scale(w);
                }
            }
        }
        out
    }
}

pub fn to_fano(tau: &CMat, dims: (usize, usize)) -> Result<FanoState> {
    let (da, db) = dims;
    if tau.shape() != (da * db, da * db) {
        return Err(Error::DimensionMismatch(format!(
            "operator of shape {:?} does not act on {da}x{db}",
            tau.shape()
        )));
    }
    if !is_hermitian(tau, 1e-12) {
        return Err(Error::ContractViolation("Fano expansion needs a Hermitian operator".into()));
    }
    let tr = tau.trace();
    if (tr.re - 1.0).abs() > SPECTRAL_TOL || tr.im.abs() > SPECTRAL_TOL {
        return Err(Error::ContractViolation(format!("Fano expansion needs unit trace, got {tr}")));
    }
    let ba = generator_basis(da)?;
    let bb = generator_basis(db)?;
    let rho = partial_trace(tau, dims, Subsystem::A)?;
    let omega = partial_trace(tau, dims, Subsystem::B)?;
    let alpha = RVec::from_vec(bloch_vector(&ba, &rho));
    let beta = RVec::from_vec(bloch_vector(&bb, &omega));
    let scale = (da * db) as f64 / 4.0;
    let gamma = RMat::from_fn(ba.len(), bb.len(), |i, j| {
        scale * (tensor(ba.get(i), bb.get(j)) * tau).trace().re
    });
    Ok(FanoState { d_a: da, d_b: db, alpha, beta, gamma })
}

/// Hermitian, unit trace; positivity is not implied.
pub fn from_fano(f: &FanoState) -> CMat {
    let ba = generator_basis(f.d_a).expect("d_a >= 2");
    let bb = generator_basis(f.d_b).expect("d_b >= 2");
    assemble(&ba, &bb, f.alpha.as_slice(), f.beta.as_slice(), &f.gamma)
}

fn assemble(ba: &GeneratorBasis, bb: &GeneratorBasis, alpha: &[f64], beta: &[f64], gamma: &RMat) -> CMat {
    let (da, db) = (ba.dim(), bb.dim());
    let mut out = identity(da * db);
    out += tensor(&ba.combine(alpha), &identity(db));
    out += tensor(&identity(da), &bb.combine(beta));
    for (i, si) in ba.sigmas().iter().enumerate() {
        for (j, sj) in bb.sigmas().iter().enumerate() {
            let w = gamma[(i, j)];
            if w != 0.0 {
                out += tensor(si, sj).scale(w);
            }
        }
    }
    out.unscale((da * db) as f64)
}

pub fn correlation_tensor(f: &FanoState) -> CorrelationTensor {
    let outer = &f.alpha * f.beta.transpose();
    CorrelationTensor {
        d_a: f.d_a,
        d_b: f.d_b,
        gamma: (&f.gamma - outer).unscale((f.d_a * f.d_b) as f64),
    }
}

/// Dense `n0 × n1 × n2` real array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, data: vec![0.0; dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    t.set(i, j, k, f(i, j, k));
                }
            }
        }
        t
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dims[1] + j) * self.dims[2] + k] = v;
    }

    /// `Σ_k T_ijk x_k`.
    pub fn contract_last(&self, x: &[f64]) -> RMat {
        RMat::from_fn(self.dims[0], self.dims[1], |i, j| {
            (0..self.dims[2]).map(|k| self.get(i, j, k) * x[k]).sum()
        })
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.dims[0])
            .map(|i| {
                (0..self.dims[1])
                    .map(|j| (0..self.dims[2]).map(|k| self.get(i, j, k)).collect())
                    .collect()
            })
            .collect()
    }
}

/// `β_j = b_j + Σ_k B_jk α_k`, `γ_ij = g_ij + Σ_k G_ijk α_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentSpec {
    pub d_a: usize,
    pub d_b: usize,
    /// `b`
    pub beta_offset: RVec,
    /// `B`, shape `(d_B²−1) × (d_A²−1)`
    pub beta_slope: RMat,
    /// `g`, shape `(d_A²−1) × (d_B²−1)`
    pub gamma_offset: RMat,
    /// `G`, shape `(d_A²−1) × (d_B²−1) × (d_A²−1)`
    pub gamma_slope: Tensor3,
}

impl AssignmentSpec {
    pub fn new(
        beta_offset: RVec,
        beta_slope: RMat,
        gamma_offset: RMat,
        gamma_slope: Tensor3,
    ) -> Result<Self> {
        let nb = beta_offset.len();
        let na = beta_slope.ncols();
        let d_a = dim_from_generator_count(na)
            .ok_or_else(|| Error::InvalidDimension(format!("{na} is not d²−1 for any d ≥ 2")))?;
        let d_b = dim_from_generator_count(nb)
            .ok_or_else(|| Error::InvalidDimension(format!("{nb} is not d²−1 for any d ≥ 2")))?;
        if beta_slope.nrows() != nb
            || gamma_offset.shape() != (na, nb)
            || gamma_slope.dims() != [na, nb, na]
        {
            return Err(Error::DimensionMismatch(format!(
                "assignment coefficients inconsistent with d_A={d_a}, d_B={d_b}"
            )));
        }
        Ok(Self { d_a, d_b, beta_offset, beta_slope, gamma_offset, gamma_slope })
    }

    /// `τ = ρ ⊗ ω0`: `b = β(ω0)`, `B = 0`, `g = 0`, `G_ijk = δ_ik b_j`.
    pub fn product(d_a: usize, omega0: &DensityMatrix) -> Result<Self> {
        let d_b = omega0.dim();
        let bb = generator_basis(d_b)?;
        generator_basis(d_a)?;
        let b = RVec::from_vec(bloch_vector(&bb, omega0.matrix()));
        let (na, nb) = (d_a * d_a - 1, d_b * d_b - 1);
        let g_slope = Tensor3::from_fn([na, nb, na], |i, j, k| if i == k { b[j] } else { 0.0 });
        Self::new(b, RMat::zeros(nb, na), RMat::zeros(na, nb), g_slope)
    }

    /// Two-qubit extension `¼[1 + Σ α_i σ_i⊗1 + a Σ σ_i⊗σ_i]`: `b = 0`,
    /// `B = 0`, `g = a·1`, `G = 0`.
    pub fn toy(a: f64) -> Self {
        Self::new(
            RVec::zeros(3),
            RMat::zeros(3, 3),
            RMat::identity(3, 3).scale(a),
            Tensor3::zeros([3, 3, 3]),
        )
        .expect("qubit dimensions")
    }

    pub fn beta(&self, alpha: &[f64]) -> RVec {
        &self.beta_offset + &self.beta_slope * RVec::from_column_slice(alpha)
    }

    pub fn gamma(&self, alpha: &[f64]) -> RMat {
        &self.gamma_offset + self.gamma_slope.contract_last(alpha)
    }

    pub fn to_json(&self) -> AssignmentJson {
        AssignmentJson {
            b: self.beta_offset.iter().copied().collect(),
            big_b: rows(&self.beta_slope),
            g: rows(&self.gamma_offset),
            big_g: self.gamma_slope.to_nested(),
        }
    }
}

fn rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>], ncols_if_empty: usize) -> Result<RMat> {
    let ncols = r.first().map(|x| x.len()).unwrap_or(ncols_if_empty);
    if r.iter().any(|x| x.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(RMat::from_fn(r.len(), ncols, |i, j| r[i][j]))
}

/// `{"b":[...],"B":[[...]],"g":[[...]],"G":[[[...]]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentJson {
    pub b: Vec<f64>,
    #[serde(rename = "B")]
    pub big_b: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    pub big_g: Vec<Vec<Vec<f64>>>,
}

impl AssignmentJson {
    pub fn to_spec(&self) -> Result<AssignmentSpec> {
        let b = RVec::from_vec(self.b.clone());
        let big_b = from_rows(&self.big_b, 0)?;
        let g = from_rows(&self.g, 0)?;
        let n0 = self.big_g.len();
        let n1 = self.big_g.first().map(|x| x.len()).unwrap_or(0);
        let n2 = self.big_g.first().and_then(|x| x.first()).map(|x| x.len()).unwrap_or(0);
        if self
            .big_g
            .iter()
            .any(|m| m.len() != n1 || m.iter().any(|r| r.len() != n2))
        {
            return Err(Error::DimensionMismatch("ragged G tensor".into()));
        }
        let big_g = Tensor3::from_fn([n0, n1, n2], |i, j, k| self.big_g[i][j][k]);
        AssignmentSpec::new(b, big_b, g, big_g)
    }
}

/// Caller-supplied nonlinear corrections `β¹(α)`, `γ¹(α)`; must be pure.
pub trait NonlinearTerms: Send + Sync {
    fn beta1(&self, alpha: &[f64]) -> RVec;
    fn gamma1(&self, alpha: &[f64]) -> RMat;
}

/// `β¹_j = αᵀ Q_j α`, `γ¹_ij = αᵀ R_ij α`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTerms {
    pub beta_forms: Vec<RMat>,
    pub gamma_forms: Vec<Vec<RMat>>,
}

impl QuadraticTerms {
    /// Coefficients uniform in `[−1, 1]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d_a: usize, d_b: usize) -> Self {
        let (na, nb) = (d_a * d_a - 1, d_b * d_b - 1);
        let form = |rng: &mut R| RMat::from_fn(na, na, |_, _| random::uniform(rng, -1.0, 1.0));
        let beta_forms = (0..nb).map(|_| form(rng)).collect();
        let gamma_forms = (0..na).map(|_| (0..nb).map(|_| form(rng)).collect()).collect();
        Self { beta_forms, gamma_forms }
    }

    fn quad(m: &RMat, a: &RVec) -> f64 {
        a.dot(&(m * a))
    }
}

impl NonlinearTerms for QuadraticTerms {
    fn beta1(&self, alpha: &[f64]) -> RVec {
        let a = RVec::from_column_slice(alpha);
        RVec::from_iterator(self.beta_forms.len(), self.beta_forms.iter().map(|q| Self::quad(q, &a)))
    }

    fn gamma1(&self, alpha: &[f64]) -> RMat {
        let a = RVec::from_column_slice(alpha);
        let na = self.gamma_forms.len();
        let nb = self.gamma_forms.first().map(|r| r.len()).unwrap_or(0);
        RMat::from_fn(na, nb, |i, j| Self::quad(&self.gamma_forms[i][j], &a))
    }
}

/// Adapter for closures.
pub struct FnTerms<F, G> {
    pub beta1: F,
    pub gamma1: G,
}

impl<F, G> NonlinearTerms for FnTerms<F, G>
where
    F: Fn(&[f64]) -> RVec + Send + Sync,
    G: Fn(&[f64]) -> RMat + Send + Sync,
{
    fn beta1(&self, alpha: &[f64]) -> RVec {
        (self.beta1)(alpha)
    }

    fn gamma1(&self, alpha: &[f64]) -> RMat {
        (self.gamma1)(alpha)
    }
}

/// `β = β_lin + ε β¹(α)`, `γ = γ_lin + ε γ¹(α)`.
#[derive(Clone)]
pub struct PerturbedAssignment {
    pub base: AssignmentSpec,
    pub epsilon: f64,
    pub terms: Arc<dyn NonlinearTerms>,
}

impl fmt::Debug for PerturbedAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbedAssignment")
            .field("base", &self.base)
            .field("epsilon", &self.epsilon)
            .finish_non_exhaustive()
    }
}

impl PerturbedAssignment {
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }
}

/// Anything that maps a Bloch vector to environment and correlation coefficients.
pub trait Assignment {
    fn dims(&self) -> (usize, usize);
    fn coefficients(&self, alpha: &[f64]) -> (RVec, RMat);
}

impl Assignment for AssignmentSpec {
    fn dims(&self) -> (usize, usize) {
        (self.d_a, self.d_b)
    }

    fn coefficients(&self, alpha: &[f64]) -> (RVec, RMat) {
        (self.beta(alpha), self.gamma(alpha))
    }
}

impl Assignment for PerturbedAssignment {
    fn dims(&self) -> (usize, usize) {
        self.base.dims()
    }

    fn coefficients(&self, alpha: &[f64]) -> (RVec, RMat) {
        let (beta, gamma) = self.base.coefficients(alpha);
        if self.epsilon == 0.0 {
            return (beta, gamma);
        }
        (
            beta + self.terms.beta1(alpha).scale(self.epsilon),
            gamma + self.terms.gamma1(alpha).scale(self.epsilon),
        )
    }
}

/// Extended state with its positivity report; non-positive outputs are
/// returned, not rejected.
#[derive(Debug, Clone)]
pub struct AssignedState {
    pub tau: CMat,
    pub min_eigenvalue: f64,
    pub positive: bool,
}

pub fn apply_assignment<A: Assignment + ?Sized>(spec: &A, rho: &DensityMatrix) -> Result<AssignedState> {
    let (da, db) = spec.dims();
    if rho.dim() != da {
        return Err(Error::DimensionMismatch(format!(
            "assignment acts on d_A={da}, state has d={}",
            rho.dim()
        )));
    }
    let ba = generator_basis(da)?;
    let bb = generator_basis(db)?;
    let alpha = bloch_vector(&ba, rho.matrix());
    let (beta, gamma) = spec.coefficients(&alpha);
    let tau = assemble(&ba, &bb, &alpha, beta.as_slice(), &gamma);
    let min_eigenvalue = eigh(&tau).min();
    Ok(AssignedState { tau, min_eigenvalue, positive: min_eigenvalue >= -SPECTRAL_TOL })
}

/// `¼[1 + Σ α_i σ_i⊗1 + a Σ σ_i⊗σ_i]`.
pub fn toy_extension(alpha: [f64; 3], a: f64) -> Result<CMat> {
    let norm = alpha.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!("|α| = {norm} exceeds 1")));
    }
    let f = FanoState {
        d_a: 2,
        d_b: 2,
        alpha: RVec::from_column_slice(&alpha),
        beta: RVec::zeros(3),
        gamma: RMat::identity(3, 3).scale(a),
    };
    Ok(from_fano(&f))
}

/// Largest `a ≥ 0` keeping the toy extension positive: `(√(4 − 3|α|²) − 1)/3`.
pub fn toy_positivity_max(alpha_norm: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha_norm) {
        return Err(Error::InvalidArgument(format!("|α| = {alpha_norm} outside [0, 1]")));
    }
    Ok(((4.0 - 3.0 * alpha_norm * alpha_norm).sqrt() - 1.0) / 3.0)
}

/// Radius `√((1+a)(1−3a))` of the Bloch ball on which the toy extension with
/// fixed `a ∈ [0, 1/3]` is positive.
pub fn toy_domain_radius(a: f64) -> Result<f64> {
    if !(0.0..=1.0 / 3.0).contains(&a) {
        return Err(Error::InvalidArgument(format!("a = {a} outside [0, 1/3]")));
    }
    Ok(((1.0 + a) * (1.0 - 3.0 * a)).max(0.0).sqrt())
}

#[derive(Debug, Clone)]
pub struct EffectiveAssignment {
    pub spec: AssignmentSpec,
    /// `ρ0 ↦ ρ` was not one-to-one; `spec` is then a minimum-norm least-squares fit.
    pub degenerate: bool,
}

/// Effective assignment `ρ ↦ V(ρ0 ⊗ ω0)V†` expressed in terms of the evolved
/// system state `ρ`. All coefficients are affine in the initial Bloch vector,
/// so they are read off by propagating `α0 = 0` and `α0 = e_k`.
pub fn effective_assignment_from_unitary(
    v: &UnitaryOperator,
    omega0: &DensityMatrix,
) -> Result<EffectiveAssignment> {
    let db = omega0.dim();
    if !v.dim().is_multiple_of(db) {
        return Err(Error::DimensionMismatch("unitary does not factor over ω0".into()));
    }
    let da = v.dim() / db;
    let ba = generator_basis(da)?;
    let (na, nb) = (da * da - 1, db * db - 1);

    let propagate = |alpha0: &[f64]| -> Result<FanoState> {
        let rho0 = crate::linalg::bloch_operator(&ba, alpha0);
        to_fano(&v.conjugate(&tensor(&rho0, omega0.matrix())), (da, db))
    };
    let zero = propagate(&vec![0.0; na])?;
    let mut a_lin = RMat::zeros(na, na);
    let mut b_lin = RMat::zeros(nb, na);
    let mut g_lin = Tensor3::zeros([na, nb, na]);
    for k in 0..na {
        let mut e = vec![0.0; na];
        e[k] = 1.0;
        let f = propagate(&e)?;
        a_lin.set_column(k, &(&f.alpha - &zero.alpha));
        b_lin.set_column(k, &(&f.beta - &zero.beta));
        for i in 0..na {
            for j in 0..nb {
                g_lin.set(i, j, k, f.gamma[(i, j)] - zero.gamma[(i, j)]);
            }
        }
    }

    let svd = a_lin.clone().svd(true, true);
    let smin = svd.singular_values.min();
    let degenerate = smin < 1e-10;
    let inv = if degenerate {
        svd.pseudo_inverse(1e-10).map_err(|e| Error::NotInvertible(e.to_string()))?
    } else {
        a_lin.clone().try_inverse().ok_or_else(|| Error::NotInvertible("Bloch map".into()))?
    };

    let big_b = &b_lin * &inv;
    let b = &zero.beta - &big_b * &zero.alpha;
    let mut big_g = Tensor3::zeros([na, nb, na]);
    let mut g = RMat::zeros(na, nb);
    for i in 0..na {
        for j in 0..nb {
            let row = RVec::from_fn(na, |k, _| g_lin.get(i, j, k));
            let mapped = inv.transpose() * row;
            for k in 0..na {
                big_g.set(i, j, k, mapped[k]);
            }
            g[(i, j)] = zero.gamma[(i, j)] - mapped.dot(&zero.alpha);
        }
    }
    Ok(EffectiveAssignment { spec: AssignmentSpec::new(b, big_b, g, big_g)?, degenerate })
}

/// `ρ ⊗ f(ρ)`; followed by SWAP and `tr_B` this realizes `ρ ↦ f(ρ)`.
pub fn swap_gadget_extension(
    rho: &DensityMatrix,
    f: impl Fn(&DensityMatrix) -> CMat,
) -> Result<CMat> {
    let image = DensityMatrix::new(f(rho))
        .map_err(|e| Error::ContractViolation(format!("gadget map output is not a state: {e}")))?;
    Ok(tensor(rho.matrix(), image.matrix()))
}
