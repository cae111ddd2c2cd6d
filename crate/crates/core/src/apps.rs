//! Two settings that produce non-CP reduced dynamics in practice: reversing a
//! system-environment evolution by pulses, and channels whose environment is
//! measured with the result fed forward to the receiver.

use serde::{Deserialize, Serialize};

use crate::channel::{
    apply_choi, channel_properties, choi_from_map, identity_choi, unitary_choi, ChoiMatrix,
};
use crate::error::{Error, Result};
use crate::linalg::{
    bloch_vector, cr, eigh, expm_hermitian, generator_basis, identity, max_abs, partial_trace,
    paulis, tensor, trace_distance, CMat, DensityMatrix, HermitianOperator, Subsystem,
    UnitaryOperator, C64,
};

/// Coupling `g·H_AB` and an instantaneous pulse `P = P_A ⊗ 1` with `{P, H_AB} = 0`.
#[derive(Debug, Clone)]
pub struct DecouplingModel {
    pub h_ab: HermitianOperator,
    pub pulse: UnitaryOperator,
    pub g: f64,
    pub t: f64,
    pub dims: (usize, usize),
}

impl DecouplingModel {
    pub fn new(h_ab: HermitianOperator, pulse_a: &UnitaryOperator, d_b: usize, g: f64, t: f64) -> Result<Self> {
        let da = pulse_a.dim();
        if h_ab.dim() != da * d_b {
            return Err(Error::DimensionMismatch(format!(
                "coupling of dim {} does not act on {da}x{d_b}",
                h_ab.dim()
            )));
        }
        let pulse = UnitaryOperator::new(tensor(pulse_a.matrix(), &identity(d_b)))?;
        let anti = pulse.conjugate(h_ab.matrix()) + h_ab.matrix();
        if max_abs(&anti) > 1e-12 {
            return Err(Error::ContractViolation(format!(
                "pulse does not anticommute with the coupling (‖PHP† + H‖ = {:.3e})",
                max_abs(&anti)
            )));
        }
        Ok(Self { h_ab, pulse, g, t, dims: (da, d_b) })
    }

    /// `H = σz ⊗ σx`, `P = σx`.
    pub fn spin_echo(g: f64, t: f64) -> Self {
        let [x, _, z] = paulis();
        let h = HermitianOperator::new(tensor(&z, &x)).expect("Hermitian");
        Self::new(h, &UnitaryOperator::new(x).expect("unitary"), 2, g, t).expect("σx anticommutes with σz")
    }

    /// `exp(−i g H t)`.
    pub fn evolution(&self) -> CMat {
        expm_hermitian(self.h_ab.matrix(), self.g * self.t)
    }
}

/// Evolve, pulse, evolve, undo the pulse; returns the reduced state.
pub fn decoupling_sequence(model: &DecouplingModel, rho: &DensityMatrix, omega: &DensityMatrix) -> Result<CMat> {
    simulate_pulse_sequence(model.h_ab.matrix(), model.pulse.matrix(), model.g, model.t, rho, omega)
}

/// Same sequence without the anticommutation check.
pub fn simulate_pulse_sequence(
    h_ab: &CMat,
    pulse: &CMat,
    g: f64,
    t: f64,
    rho: &DensityMatrix,
    omega: &DensityMatrix,
) -> Result<CMat> {
    let dims = (rho.dim(), omega.dim());
    if h_ab.nrows() != dims.0 * dims.1 || pulse.shape() != h_ab.shape() {
        return Err(Error::DimensionMismatch("pulse sequence dimensions disagree".into()));
    }
    let u = expm_hermitian(h_ab, g * t);
    let total = pulse.adjoint() * &u * pulse * &u;
    let tau = tensor(rho.matrix(), omega.matrix());
    partial_trace(&(&total * tau * total.adjoint()), dims, Subsystem::A)
}

/// `U(σ_μ⊗σ_ν)U† = Σ s^{μν}_{κρ} σ_κ⊗σ_ρ` over extended bases with `σ_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeisenbergTransfer {
    pub d_a: usize,
    pub d_b: usize,
    /// Row `(μ, ν)`, column `(κ, ρ)`, both flattened as `μ·d_B² + ν`.
    pub s: nalgebra::DMatrix<f64>,
}

impl HeisenbergTransfer {
    pub fn get(&self, mu: usize, nu: usize, kappa: usize, rho: usize) -> f64 {
        let nb = self.d_b * self.d_b;
        self.s[(mu * nb + nu, kappa * nb + rho)]
    }

    pub fn reconstruct(&self, mu: usize, nu: usize) -> CMat {
        let ea = generator_basis(self.d_a).expect("d_a >= 2").extended();
        let eb = generator_basis(self.d_b).expect("d_b >= 2").extended();
        let mut out = CMat::zeros(self.d_a * self.d_b, self.d_a * self.d_b);
        for (k, sk) in ea.iter().enumerate() {
            for (r, sr) in eb.iter().enumerate() {
                let w = self.get(mu, nu, k, r);
                if w != 0.0 {
                    out += tensor(sk, sr).scale(w);
                }
            }
        }
        out
    }
}

pub fn heisenberg_transfer(u: &UnitaryOperator, dims: (usize, usize)) -> Result<HeisenbergTransfer> {
    let (da, db) = dims;
    if u.dim() != da * db {
        return Err(Error::DimensionMismatch(format!("unitary of dim {} on {da}x{db}", u.dim())));
    }
    let ea = generator_basis(da)?.extended();
    let eb = generator_basis(db)?.extended();
    let norm = |k: usize, d: usize| if k == 0 { d as f64 } else { 2.0 };
    let pairs: Vec<CMat> = ea.iter().flat_map(|a| eb.iter().map(move |b| tensor(a, b))).collect();
    let nb = db * db;
    let n = pairs.len();
    let images: Vec<CMat> = pairs.iter().map(|p| u.conjugate(p)).collect();
    let s = nalgebra::DMatrix::from_fn(n, n, |row, col| {
        let (k, r) = (col / nb, col % nb);
        (&pairs[col] * &images[row]).trace().re / (norm(k, da) * norm(r, db))
    });
    Ok(HeisenbergTransfer { d_a: da, d_b: db, s })
}

/// Bloch-affine form `α ↦ t + Kα` of the reduced map `ρ ↦ tr_B U(ρ⊗ω)U†`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochAffine {
    pub offset: nalgebra::DVector<f64>,
    pub contraction: nalgebra::DMatrix<f64>,
}

fn forward_bloch(model: &DecouplingModel, omega: &DensityMatrix) -> Result<BlochAffine> {
    let (da, db) = model.dims;
    if omega.dim() != db {
        return Err(Error::DimensionMismatch("ω has the wrong dimension".into()));
    }
    let basis = generator_basis(da)?;
    let u = UnitaryOperator::new(model.evolution())?;
    let image = |x: &CMat| -> Result<Vec<f64>> {
        let out = partial_trace(&u.conjugate(&tensor(x, omega.matrix())), (da, db), Subsystem::A)?;
        Ok(bloch_vector(&basis, &out))
    };
    let mixed = identity(da).unscale(da as f64);
    let offset = nalgebra::DVector::from_vec(image(&mixed)?);
    let n = basis.len();
    let mut k = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        let col = nalgebra::DVector::from_vec(image(&(&mixed + basis.get(i).unscale(da as f64)))?) - &offset;
        k.set_column(i, &col);
    }
    Ok(BlochAffine { offset, contraction: k })
}

#[derive(Debug, Clone)]
pub struct RecoveryMap {
    pub choi: ChoiMatrix,
    pub min_eigenvalue: f64,
    pub non_cp: bool,
    pub forward: BlochAffine,
}

/// Choi matrix of `ρ(t) ↦ ρ(0)`, the inverse of the Bloch-affine forward map
/// extended linearly: `X ↦ [tr X·1 + (K⁻¹(α(X) − t·tr X))·σ]/d`.
pub fn recovery_map_choi(model: &DecouplingModel, omega: &DensityMatrix) -> Result<RecoveryMap> {
    let da = model.dims.0;
    let forward = forward_bloch(model, omega)?;
    let svd = forward.contraction.clone().svd(false, false);
    if svd.singular_values.min() < 1e-12 {
        return Err(Error::NotInvertible(
            "Bloch contraction is singular at this time (complete decoherence)".into(),
        ));
    }
    let kinv = forward
        .contraction
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotInvertible("Bloch contraction".into()))?;
    let basis = generator_basis(da)?;
    let back = |h: &CMat| {
        let tr = h.trace().re;
        let alpha = nalgebra::DVector::from_vec(bloch_vector(&basis, h));
        let r = &kinv * (alpha - forward.offset.scale(tr));
        (identity(da).scale(tr) + basis.combine(r.as_slice())).unscale(da as f64)
    };
    // complex-linear extension through the Hermitian and anti-Hermitian parts
    let choi = choi_from_map(da, da, |x| {
        let re = (x + x.adjoint()).scale(0.5);
        let im = (x - x.adjoint()) * C64::new(0.0, -0.5);
        back(&re) + back(&im) * C64::new(0.0, 1.0)
    });
    let min_eigenvalue = choi.min_eigenvalue();
    Ok(RecoveryMap { choi, min_eigenvalue, non_cp: min_eigenvalue < -1e-10, forward })
}

/// Isometric encoding `V: H_A → H_B ⊗ H_C`, Charlie's POVM on `H_C^{⊗n}` and
/// Bob's recovery channels on `H_B^{⊗n}`, one per outcome.
#[derive(Debug, Clone)]
pub struct AssistedChannel {
    /// Optional isometry applied to each input copy before `V`.
    pub encode: Option<CMat>,
    pub v: CMat,
    pub d_b: usize,
    pub d_c: usize,
    pub povm: Vec<CMat>,
    pub recoveries: Vec<ChoiMatrix>,
    pub n: usize,
}

const MAX_JOINT_DIM: usize = 64;

fn is_isometry(m: &CMat) -> bool {
    max_abs(&(m.adjoint() * m - identity(m.ncols()))) <= 1e-12
}

impl AssistedChannel {
    pub fn new(
        encode: Option<CMat>,
        v: CMat,
        d_b: usize,
        d_c: usize,
        povm: Vec<CMat>,
        recoveries: Vec<ChoiMatrix>,
        n: usize,
    ) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::InvalidArgument(format!("block size {n} not in 1..=2")));
        }
        let joint = (d_b * d_c).pow(n as u32);
        if joint > MAX_JOINT_DIM {
            return Err(Error::Unsupported(format!("joint output dimension {joint} exceeds {MAX_JOINT_DIM}")));
        }
        if v.nrows() != d_b * d_c || !is_isometry(&v) {
            return Err(Error::ContractViolation("V must be an isometry into H_B ⊗ H_C".into()));
        }
        if let Some(e) = &encode {
            if e.nrows() != v.ncols() || !is_isometry(e) {
                return Err(Error::ContractViolation("encoding must be an isometry into H_A".into()));
            }
        }
        if povm.is_empty() || povm.len() != recoveries.len() {
            return Err(Error::InvalidArgument("need one recovery per POVM outcome".into()));
        }
        let dc_n = d_c.pow(n as u32);
        let db_n = d_b.pow(n as u32);
        let mut total = CMat::zeros(dc_n, dc_n);
        for e in &povm {
            if e.shape() != (dc_n, dc_n) || eigh(e).min() < -1e-12 || !crate::linalg::is_hermitian(e, 1e-12) {
                return Err(Error::ContractViolation("POVM elements must be PSD on H_C^n".into()));
            }
            total += e;
        }
        if max_abs(&(total - identity(dc_n))) > 1e-12 {
            return Err(Error::ContractViolation("POVM does not sum to the identity".into()));
        }
        for r in &recoveries {
            let p = channel_properties(r, 1e-12);
            if r.d_in() != db_n || r.d_out() != db_n || !p.cp || !p.trace_preserving {
                return Err(Error::ContractViolation("recoveries must be CPTP on H_B^n".into()));
            }
        }
        Ok(Self { encode, v, d_b, d_c, povm, recoveries, n })
    }

    pub fn d_in(&self) -> usize {
        self.encode.as_ref().map(|e| e.ncols()).unwrap_or(self.v.ncols())
    }

    /// `(encode, V)^{⊗n}` with outputs regrouped as `B…B C…C`.
    fn block_isometry(&self) -> CMat {
        let single = match &self.encode {
            Some(e) => &self.v * e,
            None => self.v.clone(),
        };
        let mut w = single.clone();
        for _ in 1..self.n {
            w = tensor(&w, &single);
        }
        regroup(self.d_b, self.d_c, self.n) * w
    }

    /// Joint `B^n C^n` state before Charlie measures.
    fn joint_state(&self, input: &CMat) -> Result<CMat> {
        let din = self.d_in().pow(self.n as u32);
        if input.shape() != (din, din) {
            return Err(Error::DimensionMismatch(format!("input must be {din}x{din}")));
        }
        let w = self.block_isometry();
        Ok(&w * input * w.adjoint())
    }

    fn out_dims(&self) -> (usize, usize) {
        (self.d_b.pow(self.n as u32), self.d_c.pow(self.n as u32))
    }
}

/// Permutation taking `(B₁C₁)…(B_nC_n)` to `B₁…B_n C₁…C_n`.
fn regroup(d_b: usize, d_c: usize, n: usize) -> CMat {
    let dim = (d_b * d_c).pow(n as u32);
    let mut p = CMat::zeros(dim, dim);
    for src in 0..dim {
        let mut rest = src;
        let mut bs = vec![0; n];
        let mut cs = vec![0; n];
        for k in (0..n).rev() {
            cs[k] = rest % d_c;
            rest /= d_c;
            bs[k] = rest % d_b;
            rest /= d_b;
        }
        let b = bs.iter().fold(0, |acc, x| acc * d_b + x);
        let c = cs.iter().fold(0, |acc, x| acc * d_c + x);
        p[(b * d_c.pow(n as u32) + c, src)] = cr(1.0);
    }
    p
}

/// `Σ_x R_x(tr_C[(1 ⊗ E_x) W ψ W†])`.
pub fn assisted_transform(ch: &AssistedChannel, input: &DensityMatrix) -> Result<CMat> {
    let joint = ch.joint_state(input.matrix())?;
    let (db, dc) = ch.out_dims();
    let mut out = CMat::zeros(db, db);
    for (e, r) in ch.povm.iter().zip(&ch.recoveries) {
        let conditioned = partial_trace(&(tensor(&identity(db), e) * &joint), (db, dc), Subsystem::A)?;
        out += apply_choi(r, &conditioned)?;
    }
    Ok(out)
}

/// `tr_C W ψ W†`, Bob's state without Charlie's help.
pub fn unassisted_transform(ch: &AssistedChannel, input: &DensityMatrix) -> Result<CMat> {
    let joint = ch.joint_state(input.matrix())?;
    partial_trace(&joint, ch.out_dims(), Subsystem::A)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistinguishabilityGain {
    pub assisted: f64,
    pub unassisted: f64,
    pub gain: f64,
}

/// Trace distances `‖·‖₁` of the two outputs with and without assistance.
pub fn distinguishability_gain(
    ch: &AssistedChannel,
    psi1: &DensityMatrix,
    psi2: &DensityMatrix,
) -> Result<DistinguishabilityGain> {
    let assisted = trace_distance(&assisted_transform(ch, psi1)?, &assisted_transform(ch, psi2)?)?;
    let unassisted = trace_distance(&unassisted_transform(ch, psi1)?, &unassisted_transform(ch, psi2)?)?;
    Ok(DistinguishabilityGain { assisted, unassisted, gain: assisted - unassisted })
}

/// `V|0⟩ = |00⟩`, `V|1⟩ = |11⟩`; Charlie measures `|±⟩`, Bob applies `1` or `σz`.
pub fn dephasing_copy_demo() -> AssistedChannel {
    let mut v = CMat::zeros(4, 2);
    v[(0, 0)] = cr(1.0);
    v[(3, 1)] = cr(1.0);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = nalgebra::DVector::from_vec(vec![cr(h), cr(h)]);
    let minus = nalgebra::DVector::from_vec(vec![cr(h), cr(-h)]);
    let povm = vec![&plus * plus.adjoint(), &minus * minus.adjoint()];
    let [_, _, z] = paulis();
    let recoveries = vec![identity_choi(2), unitary_choi(&UnitaryOperator::new(z).expect("unitary"))];
    AssistedChannel::new(None, v, 2, 2, povm, recoveries, 1).expect("valid demo channel")
}
