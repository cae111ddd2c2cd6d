//! Seeded random operators for sweeps, property tests and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::KrausSet;
use crate::linalg::{c, CMat, DensityMatrix, HermitianOperator, UnitaryOperator};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> HermitianOperator {
    let g = ginibre(rng, d, d);
    HermitianOperator::new((&g + g.adjoint()).scale(0.5)).expect("Hermitian by construction")
}

/// Haar-distributed unitary (QR of a Ginibre matrix with phase fix).
pub fn unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> UnitaryOperator {
    UnitaryOperator::new(isometry_matrix(rng, d, d)).expect("QR factor is unitary")
}

/// Random `rows × cols` isometry (`V†V = 1`, requires `rows ≥ cols`).
pub fn isometry_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let g = ginibre(rng, rows, cols);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..cols {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..rows {
            q[(i, k)] *= phase;
        }
    }
    q
}

/// Full-rank mixed state from the induced (Ginibre) measure.
pub fn density<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DensityMatrix {
    density_with_rank(rng, d, d)
}

pub fn density_with_rank<R: Rng + ?Sized>(rng: &mut R, d: usize, rank: usize) -> DensityMatrix {
    let g = ginibre(rng, d, rank);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new(m.unscale(tr)).expect("Ginibre state is a density matrix")
}

pub fn pure_state<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DensityMatrix {
    density_with_rank(rng, d, 1)
}

/// Random trace-preserving CP map with `n_kraus` operators `d_out × d_in`.
pub fn cptp_kraus<R: Rng + ?Sized>(
    rng: &mut R,
    d_in: usize,
    d_out: usize,
    n_kraus: usize,
) -> KrausSet {
    let v = isometry_matrix(rng, d_out * n_kraus, d_in);
    let ops = (0..n_kraus)
        .map(|k| v.view((k * d_out, 0), (d_out, d_in)).into_owned())
        .collect();
    KrausSet::cp(ops)
}

/// Uniform real in `[lo, hi)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
