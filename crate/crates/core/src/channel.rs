//! Dynamical (Choi) matrix calculus.
//!
//! A Choi matrix `D` of a map `Φ: L(C^d_in) → L(C^d_out)` is indexed
//! `D[(m,s),(n,t)]` with composite row `m·d_in + s` and column `n·d_in + t`,
//! so that `Φ(ρ)[m,n] = Σ_{s,t} D[(m,s),(n,t)] ρ[s,t]`. In this convention
//! the identity channel on a qubit is
//!
//! ```text
//! D = |1 0 0 1|      Φ(ρ)[0,0] = D[(0,0),(0,0)] ρ00 + D[(0,1),(0,1)] ρ11 = ρ00
//!     |0 0 0 0|      Φ(ρ)[0,1] = D[(0,0),(1,1)] ρ01                  = ρ01
//!     |0 0 0 0|
//!     |1 0 0 1|
//! ```
//!
//! and the transpose map is the SWAP matrix. The output index `m` is the
//! outer one, so a shift `X ⊗ 1` adds the constant `X·tr(ρ)` to the output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    cr, eigh, generator_basis, hermitian_part, identity, is_hermitian, max_abs, partial_trace,
    tensor, trace_norm_hermitian, unvec, vec_row_major, CMat, CVec, GeneratorBasis, Subsystem,
    UnitaryOperator,
};

/// Eigenvalues below this magnitude are dropped when extracting Kraus operators.
pub const KRAUS_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    d_in: usize,
    d_out: usize,
    d: CMat,
}

impl ChoiMatrix {
    /// Validates shape and hermiticity (relative tolerance 1e-9), then stores
    /// the Hermitian part.
    pub fn new(d: CMat, d_in: usize, d_out: usize) -> Result<Self> {
        let n = d_in * d_out;
        if d.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix for d_in={d_in}, d_out={d_out} must be {n}x{n}, got {:?}",
                d.shape()
            )));
        }
        if !is_hermitian(&d, 1e-9) {
            return Err(Error::ContractViolation("Choi matrix is not Hermitian".into()));
        }
        Ok(Self { d_in, d_out, d: hermitian_part(&d) })
    }

    pub(crate) fn from_hermitian_unchecked(d: CMat, d_in: usize, d_out: usize) -> Self {
        Self { d_in, d_out, d: hermitian_part(&d) }
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn matrix(&self) -> &CMat {
        &self.d
    }

    pub fn into_inner(self) -> CMat {
        self.d
    }

    pub fn trace(&self) -> f64 {
        self.d.trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh(&self.d).values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigh(&self.d).min()
    }

    /// `Σ_m D[(m,s),(m,t)]`; the identity for trace-preserving maps.
    pub fn trace_over_output(&self) -> CMat {
        partial_trace(&self.d, (self.d_out, self.d_in), Subsystem::B).expect("shape checked")
    }

    /// `Σ_s D[(m,s),(n,s)] = Φ(1)`.
    pub fn trace_over_input(&self) -> CMat {
        partial_trace(&self.d, (self.d_out, self.d_in), Subsystem::A).expect("shape checked")
    }

    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        apply_choi(self, rho)
    }

    /// Affine combination `a·self + b·other` of maps with matching dimensions.
    pub fn combine(&self, a: f64, other: &ChoiMatrix, b: f64) -> Result<ChoiMatrix> {
        if (self.d_in, self.d_out) != (other.d_in, other.d_out) {
            return Err(Error::DimensionMismatch("combining Choi matrices of different maps".into()));
        }
        Ok(Self::from_hermitian_unchecked(
            self.d.scale(a) + other.d.scale(b),
            self.d_in,
            self.d_out,
        ))
    }
}

/// `Φ(ρ) = Σ_a λ_a M_a ρ M_a†`, with signed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    pub weights: Vec<f64>,
    pub operators: Vec<CMat>,
}

impl KrausSet {
    pub fn new(weights: Vec<f64>, operators: Vec<CMat>) -> Result<Self> {
        if weights.len() != operators.len() {
            return Err(Error::DimensionMismatch("one weight per Kraus operator".into()));
        }
        if let Some(first) = operators.first() {
            if operators.iter().any(|m| m.shape() != first.shape()) {
                return Err(Error::DimensionMismatch("Kraus operators differ in shape".into()));
            }
        }
        Ok(Self { weights, operators })
    }

    /// Unit weights.
    pub fn cp(operators: Vec<CMat>) -> Self {
        let weights = vec![1.0; operators.len()];
        Self { weights, operators }
    }

    pub fn empty() -> Self {
        Self { weights: Vec::new(), operators: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// `(d_out, d_in)` of the operators.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.operators.first().map(|m| m.shape())
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let d_out = self.shape().map(|s| s.0).unwrap_or(0);
        let mut out = CMat::zeros(d_out, d_out);
        for (w, m) in self.weights.iter().zip(&self.operators) {
            out += (m * rho * m.adjoint()).scale(*w);
        }
        out
    }

    /// `Σ λ_a M_a† M_a`.
    pub fn completeness(&self) -> CMat {
        let d_in = self.shape().map(|s| s.1).unwrap_or(0);
        let mut out = CMat::zeros(d_in, d_in);
        for (w, m) in self.weights.iter().zip(&self.operators) {
            out += (m.adjoint() * m).scale(*w);
        }
        out
    }

    pub fn is_cp(&self) -> bool {
        self.weights.iter().all(|w| *w >= 0.0)
    }
}

/// `Λ₊ − Λ₋` with both parts carrying positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceForm {
    pub plus: KrausSet,
    pub minus: KrausSet,
}

impl DifferenceForm {
    pub fn apply(&self, rho: &CMat) -> CMat {
        let plus = self.plus.apply(rho);
        if self.minus.is_empty() {
            plus
        } else {
            plus - self.minus.apply(rho)
        }
    }

    pub fn to_choi(&self, d_in: usize, d_out: usize) -> ChoiMatrix {
        let mut d = CMat::zeros(d_in * d_out, d_in * d_out);
        accumulate_kraus(&mut d, &self.plus, 1.0);
        accumulate_kraus(&mut d, &self.minus, -1.0);
        ChoiMatrix::from_hermitian_unchecked(d, d_in, d_out)
    }
}

/// A CP trace-preserving part plus a constant traceless shift `ξ·σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMapForm {
    pub kraus: KrausSet,
    pub xi: Vec<f64>,
}

impl AffineMapForm {
    pub fn new(kraus: KrausSet, xi: Vec<f64>) -> Result<Self> {
        let (d_out, _) = kraus
            .shape()
            .ok_or_else(|| Error::InvalidArgument("affine form needs Kraus operators".into()))?;
        if xi.len() != d_out * d_out - 1 {
            return Err(Error::DimensionMismatch(format!(
                "shift vector has {} entries, expected {}",
                xi.len(),
                d_out * d_out - 1
            )));
        }
        Ok(Self { kraus, xi })
    }

    pub fn d_in(&self) -> usize {
        self.kraus.shape().map(|s| s.1).unwrap_or(0)
    }

    pub fn d_out(&self) -> usize {
        self.kraus.shape().map(|s| s.0).unwrap_or(0)
    }

    /// The traceless operator `ξ·σ`.
    pub fn shift_operator(&self) -> CMat {
        generator_basis(self.d_out()).expect("d_out >= 2").combine(&self.xi)
    }
}

pub fn apply_choi(choi: &ChoiMatrix, rho: &CMat) -> Result<CMat> {
    let (di, dout) = (choi.d_in, choi.d_out);
    if rho.shape() != (di, di) {
        return Err(Error::DimensionMismatch(format!(
            "Choi map expects {di}x{di} input, got {:?}",
            rho.shape()
        )));
    }
    let d = &choi.d;
    Ok(CMat::from_fn(dout, dout, |m, n| {
        let mut acc = cr(0.0);
        for s in 0..di {
            for t in 0..di {
                acc += d[(m * di + s, n * di + t)] * rho[(s, t)];
            }
        }
        acc
    }))
}

fn accumulate_kraus(d: &mut CMat, kraus: &KrausSet, sign: f64) {
    for (w, m) in kraus.weights.iter().zip(&kraus.operators) {
        let v = CVec::from_vec(vec_row_major(m));
        *d += (&v * v.adjoint()).scale(sign * w);
    }
}

/// `D[(m,s),(n,t)] = Σ_a λ_a M_a[m,s] conj(M_a[n,t])`.
pub fn choi_from_kraus(kraus: &KrausSet) -> Result<ChoiMatrix> {
    let (d_out, d_in) = kraus
        .shape()
        .ok_or_else(|| Error::InvalidArgument("empty Kraus set has no dimensions".into()))?;
    let mut d = CMat::zeros(d_in * d_out, d_in * d_out);
    accumulate_kraus(&mut d, kraus, 1.0);
    Ok(ChoiMatrix::from_hermitian_unchecked(d, d_in, d_out))
}

/// Eigen-decomposition of `D`: weights are the eigenvalues (those with
/// `|λ| < 1e-12` dropped), operators the row-major reshaped unit eigenvectors.
pub fn kraus_from_choi(choi: &ChoiMatrix) -> KrausSet {
    let spec = eigh(&choi.d);
    let mut weights = Vec::new();
    let mut operators = Vec::new();
    for (k, &lam) in spec.values.iter().enumerate() {
        if lam.abs() < KRAUS_CUTOFF {
            continue;
        }
        let v: Vec<_> = spec.vectors.column(k).iter().copied().collect();
        weights.push(lam);
        operators.push(unvec(&v, choi.d_out, choi.d_in));
    }
    KrausSet { weights, operators }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelProperties {
    pub trace_preserving: bool,
    pub unital: bool,
    pub cp: bool,
    pub min_eigenvalue: f64,
}

/// Scale-aware CP cutoff `1e-9 · tr D` (at least `1e-12`).
pub fn default_cp_tol(choi: &ChoiMatrix) -> f64 {
    (1e-9 * choi.trace().abs()).max(1e-12)
}

/// Trace preservation (`Σ_m D[(m,s),(m,t)] = δ_st`), unitality
/// (`Φ(1/d_in) = 1/d_out`) and complete positivity (`λ_min(D) ≥ −tol`).
pub fn channel_properties(choi: &ChoiMatrix, tol: f64) -> ChannelProperties {
    let tp_err = max_abs(&(choi.trace_over_output() - identity(choi.d_in)));
    let unit = identity(choi.d_out).scale(choi.d_in as f64 / choi.d_out as f64);
    let unital_err = max_abs(&(choi.trace_over_input() - unit));
    let min_eigenvalue = choi.min_eigenvalue();
    ChannelProperties {
        trace_preserving: tp_err <= tol,
        unital: unital_err <= tol,
        cp: min_eigenvalue >= -tol,
        min_eigenvalue,
    }
}

/// Splits the spectrum of `D` by sign.
pub fn difference_form(choi: &ChoiMatrix) -> DifferenceForm {
    let k = kraus_from_choi(choi);
    let mut plus = KrausSet::empty();
    let mut minus = KrausSet::empty();
    for (w, m) in k.weights.into_iter().zip(k.operators) {
        if w > 0.0 {
            plus.weights.push(w);
            plus.operators.push(m);
        } else {
            minus.weights.push(-w);
            minus.operators.push(m);
        }
    }
    DifferenceForm { plus, minus }
}

/// `Σ_a λ_a M_a ρ M_a† + ξ·σ`.
pub fn apply_affine_form(form: &AffineMapForm, rho: &CMat) -> Result<CMat> {
    if rho.shape() != (form.d_in(), form.d_in()) {
        return Err(Error::DimensionMismatch(format!(
            "affine form expects {}x{} input",
            form.d_in(),
            form.d_in()
        )));
    }
    Ok(form.kraus.apply(rho) + form.shift_operator())
}

/// `D = Σ_a vec(M_a) vec(M_a)† + (ξ·σ) ⊗ 1`.
pub fn choi_of_affine(form: &AffineMapForm) -> Result<ChoiMatrix> {
    let base = choi_from_kraus(&form.kraus)?;
    let shift = tensor(&form.shift_operator(), &identity(form.d_in()));
    Ok(ChoiMatrix::from_hermitian_unchecked(base.d + shift, form.d_in(), form.d_out()))
}

/// Choi matrices of the system map `ρ ↦ tr_B V(ρ⊗ω0)V†` and of the
/// environment map `ω ↦ tr_A V(ρ0⊗ω)V†`, from their index sums.
pub fn induced_choi_pair(
    v: &UnitaryOperator,
    omega0: &CMat,
    rho0: &CMat,
) -> Result<(ChoiMatrix, ChoiMatrix)> {
    let (da, db) = (rho0.nrows(), omega0.nrows());
    if v.dim() != da * db || !rho0.is_square() || !omega0.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "unitary of size {} does not act on {da}x{db}",
            v.dim()
        )));
    }
    let vm = v.matrix();
    let at = |a: usize, al: usize, c: usize, ga: usize| vm[(a * db + al, c * db + ga)];

    let mut dsys = CMat::zeros(da * da, da * da);
    for a in 0..da {
        for c in 0..da {
            for b in 0..da {
                for d in 0..da {
                    let mut acc = cr(0.0);
                    for al in 0..db {
                        for ga in 0..db {
                            for de in 0..db {
                                acc += at(a, al, c, ga) * at(b, al, d, de).conj() * omega0[(ga, de)];
                            }
                        }
                    }
                    dsys[(a * da + c, b * da + d)] = acc;
                }
            }
        }
    }

    let mut denv = CMat::zeros(db * db, db * db);
    for be in 0..db {
        for ga in 0..db {
            for be2 in 0..db {
                for de in 0..db {
                    let mut acc = cr(0.0);
                    for a in 0..da {
                        for c in 0..da {
                            for d in 0..da {
                                acc += at(a, be, c, ga) * at(a, be2, d, de).conj() * rho0[(c, d)];
                            }
                        }
                    }
                    denv[(be * db + ga, be2 * db + de)] = acc;
                }
            }
        }
    }
    Ok((
        ChoiMatrix::from_hermitian_unchecked(dsys, da, da),
        ChoiMatrix::from_hermitian_unchecked(denv, db, db),
    ))
}

/// Choi matrix of an arbitrary linear map, evaluated on the matrix units `|s⟩⟨t|`.
pub fn choi_from_map(d_in: usize, d_out: usize, map: impl Fn(&CMat) -> CMat) -> ChoiMatrix {
    let mut d = CMat::zeros(d_in * d_out, d_in * d_out);
    for s in 0..d_in {
        for t in 0..d_in {
            let mut unit = CMat::zeros(d_in, d_in);
            unit[(s, t)] = cr(1.0);
            let img = map(&unit);
            for m in 0..d_out {
                for n in 0..d_out {
                    d[(m * d_in + s, n * d_in + t)] = img[(m, n)];
                }
            }
        }
    }
    ChoiMatrix::from_hermitian_unchecked(d, d_in, d_out)
}

pub fn identity_choi(d: usize) -> ChoiMatrix {
    unitary_choi(&UnitaryOperator::identity(d))
}

pub fn unitary_choi(u: &UnitaryOperator) -> ChoiMatrix {
    choi_from_kraus(&KrausSet::cp(vec![u.matrix().clone()])).expect("non-empty")
}

/// The transpose map `ρ ↦ ρᵀ`; its Choi matrix is SWAP.
pub fn transpose_choi(d: usize) -> ChoiMatrix {
    ChoiMatrix::from_hermitian_unchecked(UnitaryOperator::swap(d).into_inner(), d, d)
}

/// `ρ ↦ tr(ρ)·1/d`.
pub fn depolarizing_choi(d: usize) -> ChoiMatrix {
    ChoiMatrix::from_hermitian_unchecked(identity(d * d).unscale(d as f64), d, d)
}

/// Least-squares linear map through `(input, output)` pairs.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub choi: ChoiMatrix,
    /// `max_k ‖Φ(ρ_k) − out_k‖₁`.
    pub residual: f64,
}

/// Solves `vec(out_k) = S vec(ρ_k)` in the least-squares sense and reshuffles
/// the superoperator `S` into a Choi matrix. Inputs must span the operator space.
pub fn fit_linear_map(inputs: &[CMat], outputs: &[CMat]) -> Result<LinearFit> {
    if inputs.is_empty() || inputs.len() != outputs.len() {
        return Err(Error::DimensionMismatch("need one output per input".into()));
    }
    let d_in = inputs[0].nrows();
    let d_out = outputs[0].nrows();
    let k = inputs.len();
    let x = CMat::from_fn(d_in * d_in, k, |r, j| inputs[j][(r / d_in, r % d_in)]);
    let y = CMat::from_fn(d_out * d_out, k, |r, j| outputs[j][(r / d_out, r % d_out)]);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > 1e-10 * smax.max(1.0)).count();
    if rank < d_in * d_in {
        return Err(Error::RankDeficient(format!(
            "inputs span a {rank}-dimensional space, need {}",
            d_in * d_in
        )));
    }
    let pinv = svd
        .pseudo_inverse(1e-12 * smax)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let s = y * pinv;
    let mut d = CMat::zeros(d_in * d_out, d_in * d_out);
    for m in 0..d_out {
        for n in 0..d_out {
            for a in 0..d_in {
                for b in 0..d_in {
                    d[(m * d_in + a, n * d_in + b)] = s[(m * d_out + n, a * d_in + b)];
                }
            }
        }
    }
    let choi = ChoiMatrix::from_hermitian_unchecked(d, d_in, d_out);
    let residual = max_misfit(&choi, inputs, outputs)?;
    Ok(LinearFit { choi, residual })
}

/// `max_k ‖Φ(ρ_k) − out_k‖₁` for the map with Choi matrix `choi`.
pub fn max_misfit(choi: &ChoiMatrix, inputs: &[CMat], outputs: &[CMat]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (rho, out) in inputs.iter().zip(outputs) {
        let diff = apply_choi(choi, rho)? - out;
        worst = worst.max(trace_norm_hermitian(&hermitian_part(&diff)));
    }
    Ok(worst)
}

/// `(ξ·σ) ⊗ 1_in`.
pub fn shift_block(basis: &GeneratorBasis, xi: &[f64], d_in: usize) -> CMat {
    tensor(&basis.combine(xi), &identity(d_in))
}
