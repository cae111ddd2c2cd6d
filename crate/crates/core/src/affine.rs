//! Reduced dynamics of an initially correlated system written as a CP part
//! plus a constant traceless shift.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{choi_of_affine, AffineMapForm, KrausSet};
use crate::error::{Error, Result};
use crate::fano::{AssignmentSpec, CorrelationTensor, RMat};
use crate::linalg::{
    cr, eigh, generator_basis, partial_trace, partial_transpose_b, CMat, CVec, DensityMatrix,
    Subsystem, UnitaryOperator, SPECTRAL_TOL,
};

/// `(1 ⊗ ⟨μ|) U (1 ⊗ |ν⟩)`.
fn env_block(u: &CMat, mu: &CVec, nu: &CVec, da: usize, db: usize) -> CMat {
    CMat::from_fn(da, da, |a, a2| {
        let mut acc = cr(0.0);
        for b in 0..db {
            let cm = mu[b].conj();
            if cm == cr(0.0) {
                continue;
            }
            for b2 in 0..db {
                acc += cm * u[(a * db + b, a2 * db + b2)] * nu[b2];
            }
        }
        acc
    })
}

/// For `τ = ρ ⊗ ω + Σ Γ_ij σ_i ⊗ σ_j`, `tr_B(U τ U†) = Σ M ρ M† + ξ·σ` with
/// `M_μν = √p_ν (1⊗⟨μ|) U (1⊗|ν⟩)` over the eigen-decomposition of `ω`.
pub fn reduced_affine_form(
    u: &UnitaryOperator,
    omega: &DensityMatrix,
    gamma: &CorrelationTensor,
) -> Result<AffineMapForm> {
    let db = omega.dim();
    if gamma.d_b != db || u.dim() != gamma.d_a * db {
        return Err(Error::DimensionMismatch(format!(
            "unitary of dim {} with correlations on {}x{} and ω of dim {db}",
            u.dim(),
            gamma.d_a,
            gamma.d_b
        )));
    }
    let da = gamma.d_a;
    let spec = eigh(omega.matrix());
    let mut ops = Vec::with_capacity(db * db);
    for nu in 0..db {
        let p = spec.values[nu].max(0.0);
        if p == 0.0 {
            continue;
        }
        let vnu = spec.vector(nu);
        for mu in 0..db {
            ops.push(env_block(u.matrix(), &spec.vector(mu), &vnu, da, db).scale(p.sqrt()));
        }
    }
    let shifted = partial_trace(&u.conjugate(&gamma.operator()), (da, db), Subsystem::A)?;
    let xi = generator_basis(da)?.coefficients(&shifted);
    AffineMapForm::new(KrausSet::cp(ops), xi)
}

/// Rotation by `θ` in the `{|01⟩, |10⟩}` block.
pub fn example_unitary(theta: f64) -> UnitaryOperator {
    let (s, co) = theta.sin_cos();
    let mut m = CMat::zeros(4, 4);
    m[(0, 0)] = cr(1.0);
    m[(3, 3)] = cr(1.0);
    m[(1, 1)] = cr(co);
    m[(1, 2)] = cr(s);
    m[(2, 1)] = cr(-s);
    m[(2, 2)] = cr(co);
    UnitaryOperator::new(m).expect("rotation is unitary")
}

pub fn example_xi(a: f64, theta: f64) -> [f64; 3] {
    [0.0, 0.0, 0.5 * a * (2.0 * theta).sin()]
}

/// `Γ = (a/4)·1` of the two-qubit toy extension.
pub fn toy_correlation(a: f64) -> CorrelationTensor {
    CorrelationTensor { d_a: 2, d_b: 2, gamma: RMat::identity(3, 3).scale(a / 4.0) }
}

pub fn toy_affine_form(a: f64, theta: f64) -> Result<AffineMapForm> {
    reduced_affine_form(&example_unitary(theta), &DensityMatrix::maximally_mixed(2), &toy_correlation(a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    /// Ascending.
    pub eigenvalues: [f64; 4],
    pub xi_z: f64,
}

pub fn spectrum_sweep(a: f64, thetas: &[f64]) -> Result<Vec<SweepRow>> {
    thetas
        .par_iter()
        .map(|&theta| {
            let form = toy_affine_form(a, theta)?;
            let d = choi_of_affine(&form)?;
            let ev = d.eigenvalues();
            Ok(SweepRow { theta, eigenvalues: [ev[0], ev[1], ev[2], ev[3]], xi_z: form.xi[2] })
        })
        .collect()
}

/// `n` equally spaced points on `[0, 2π]`, both ends included.
pub fn theta_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n)
            .map(|k| 2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `Γ_ij = (g_ij + Σ_k (G_ijk − δ_ik b_j) α_k − Σ_k B_jk α_i α_k)/(d_A d_B)`.
pub fn quadratic_gamma(spec: &AssignmentSpec, alpha: &[f64]) -> CorrelationTensor {
    let na = spec.d_a * spec.d_a - 1;
    let nb = spec.d_b * spec.d_b - 1;
    let gamma = RMat::from_fn(na, nb, |i, j| {
        let mut v = spec.gamma_offset[(i, j)];
        for k in 0..na {
            let delta = if i == k { spec.beta_offset[j] } else { 0.0 };
            v += (spec.gamma_slope.get(i, j, k) - delta) * alpha[k];
            v -= spec.beta_slope[(j, k)] * alpha[i] * alpha[k];
        }
        v / (spec.d_a * spec.d_b) as f64
    });
    CorrelationTensor { d_a: spec.d_a, d_b: spec.d_b, gamma }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PptReport {
    pub ppt: bool,
    pub min_pt_eigenvalue: f64,
    /// PPT decides separability only for 2⊗2 and 2⊗3.
    pub separability_conclusive: bool,
}

pub fn ppt_check(tau: &CMat, dims: (usize, usize)) -> Result<PptReport> {
    let tr = tau.trace();
    if (tr - cr(1.0)).norm() > SPECTRAL_TOL {
        return Err(Error::ContractViolation(format!("PPT check needs unit trace, got {tr}")));
    }
    if !crate::linalg::is_hermitian(tau, 1e-12) {
        return Err(Error::ContractViolation("PPT check needs a Hermitian operator".into()));
    }
    let pt = partial_transpose_b(tau, dims)?;
    let min_pt_eigenvalue = eigh(&pt).min();
    let conclusive = dims.0 * dims.1 <= 6;
    Ok(PptReport {
        ppt: min_pt_eigenvalue >= -SPECTRAL_TOL,
        min_pt_eigenvalue,
        separability_conclusive: conclusive,
    })
}
