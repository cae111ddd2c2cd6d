//! Weak coupling plus weak initial correlations: the reduced dynamics is
//! linear and CP at first order in both strengths. This module measures the
//! departure from that at finite strength.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{fit_linear_map, KrausSet};
use crate::error::{Error, Result};
use crate::fano::{apply_assignment, AssignmentSpec, NonlinearTerms, PerturbedAssignment, QuadraticTerms};
use crate::linalg::{
    eigh, expm_hermitian, generator_basis, identity, partial_trace, tensor, CMat, DensityMatrix,
    HermitianOperator, Subsystem,
};
use crate::random;

const FD_STEP: f64 = 1e-5;
pub const SCALING_FLOOR: f64 = 1e-14;

/// `H = H_A ⊗ 1 + η H_int`, initial state from a perturbed product assignment.
#[derive(Debug, Clone)]
pub struct WeakCouplingModel {
    pub h_a: HermitianOperator,
    pub h_int: HermitianOperator,
    pub eta: f64,
    pub omega0: DensityMatrix,
    pub assignment: PerturbedAssignment,
    pub t: f64,
}

impl WeakCouplingModel {
    /// Base assignment `ρ ↦ ρ ⊗ ω0` perturbed by `ε·terms`.
    pub fn new(
        h_a: HermitianOperator,
        h_int: HermitianOperator,
        eta: f64,
        omega0: DensityMatrix,
        terms: Arc<dyn NonlinearTerms>,
        epsilon: f64,
        t: f64,
    ) -> Result<Self> {
        let base = AssignmentSpec::product(h_a.dim(), &omega0)?;
        Self::with_assignment(h_a, h_int, eta, omega0, PerturbedAssignment { base, epsilon, terms }, t)
    }

    pub fn with_assignment(
        h_a: HermitianOperator,
        h_int: HermitianOperator,
        eta: f64,
        omega0: DensityMatrix,
        assignment: PerturbedAssignment,
        t: f64,
    ) -> Result<Self> {
        let (da, db) = (h_a.dim(), omega0.dim());
        if h_int.dim() != da * db || assignment.base.d_a != da || assignment.base.d_b != db {
            return Err(Error::DimensionMismatch(format!(
                "model pieces disagree on {da}x{db}"
            )));
        }
        let p = eigh(omega0.matrix()).values;
        if p[0] <= 1e-9 {
            return Err(Error::ContractViolation("ω0 must have full rank".into()));
        }
        if p.windows(2).any(|w| w[1] - w[0] <= 1e-9) {
            return Err(Error::ContractViolation("ω0 must have a non-degenerate spectrum".into()));
        }
        Ok(Self { h_a, h_int, eta, omega0, assignment, t })
    }

    /// `h_i`, `h_ij` uniform in `[−1, 1]`, `ω0` a half-mixed random state,
    /// quadratic nonlinear terms, `t = 1`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d_a: usize, d_b: usize, eta: f64, epsilon: f64) -> Result<Self> {
        let ba = generator_basis(d_a)?;
        let bb = generator_basis(d_b)?;
        let ha: Vec<f64> = (0..ba.len()).map(|_| random::uniform(rng, -1.0, 1.0)).collect();
        let mut hint = CMat::zeros(d_a * d_b, d_a * d_b);
        for si in ba.sigmas() {
            for sj in bb.sigmas() {
                hint += tensor(si, sj).scale(random::uniform(rng, -1.0, 1.0));
            }
        }
        let w = random::density(rng, d_b).into_inner();
        let omega0 = DensityMatrix::new((w + identity(d_b).unscale(d_b as f64)).scale(0.5))?;
        let terms = Arc::new(QuadraticTerms::random(rng, d_a, d_b));
        Self::new(
            HermitianOperator::new(ba.combine(&ha))?,
            HermitianOperator::new(hint)?,
            eta,
            omega0,
            terms,
            epsilon,
            1.0,
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h_a.dim(), self.omega0.dim())
    }

    pub fn epsilon(&self) -> f64 {
        self.assignment.epsilon
    }

    /// Same model with `ε = η = s`.
    pub fn at_scale(&self, s: f64) -> Self {
        Self { eta: s, assignment: self.assignment.with_epsilon(s), ..self.clone() }
    }

    fn hamiltonian(&self, eta: f64) -> CMat {
        let db = self.omega0.dim();
        tensor(self.h_a.matrix(), &identity(db)) + self.h_int.matrix().scale(eta)
    }

    pub fn u_ab(&self, eta: f64) -> CMat {
        expm_hermitian(&self.hamiltonian(eta), self.t)
    }

    pub fn u_a(&self) -> CMat {
        expm_hermitian(self.h_a.matrix(), self.t)
    }
}

#[derive(Debug, Clone)]
pub struct ExactEvolution {
    pub state: CMat,
    /// Whether the assigned initial `τ` was positive.
    pub tau_positive: bool,
}

/// `tr_B(U_AB τ(ρ) U_AB†)`.
pub fn evolve_exact(model: &WeakCouplingModel, rho: &DensityMatrix) -> Result<ExactEvolution> {
    let assigned = apply_assignment(&model.assignment, rho)?;
    let u = model.u_ab(model.eta);
    let out = partial_trace(&(&u * &assigned.tau * u.adjoint()), model.dims(), Subsystem::A)?;
    Ok(ExactEvolution { state: out, tau_positive: assigned.positive })
}

/// `O₁ = ∂U_AB/∂η` at `η = 0`, by central difference.
pub fn first_order_generator(model: &WeakCouplingModel) -> CMat {
    (model.u_ab(FD_STEP) - model.u_ab(-FD_STEP)).unscale(2.0 * FD_STEP)
}

/// `M_μν = √p_ν (U_A δ_μν + η ⟨μ|O₁|ν⟩)` in the eigenbasis of `ω0`.
pub fn first_order_kraus(model: &WeakCouplingModel) -> KrausSet {
    let (da, db) = model.dims();
    let spec = eigh(model.omega0.matrix());
    let o1 = first_order_generator(model);
    let ua = model.u_a();
    let mut ops = Vec::with_capacity(db * db);
    for nu in 0..db {
        let sp = spec.values[nu].max(0.0).sqrt();
        let vnu = spec.vector(nu);
        for mu in 0..db {
            let vmu = spec.vector(mu);
            let mut m = CMat::from_fn(da, da, |a, a2| {
                let mut acc = crate::linalg::cr(0.0);
                for b in 0..db {
                    for b2 in 0..db {
                        acc += vmu[b].conj() * o1[(a * db + b, a2 * db + b2)] * vnu[b2];
                    }
                }
                acc
            })
            .scale(model.eta);
            if mu == nu {
                m += &ua;
            }
            ops.push(m.scale(sp));
        }
    }
    KrausSet::cp(ops)
}

pub fn first_order_prediction(model: &WeakCouplingModel, rho: &DensityMatrix) -> CMat {
    first_order_kraus(model).apply(rho.matrix())
}

/// `{1/d} ∪ {(1 ± ½ c_i σ_i)/d}` with `c_i` putting `(1 + c_i σ_i)/d` on the
/// boundary of the state space.
pub fn probe_states(d: usize) -> Result<Vec<DensityMatrix>> {
    let basis = generator_basis(d)?;
    let mut out = vec![DensityMatrix::maximally_mixed(d)];
    for s in basis.sigmas() {
        let c = -1.0 / eigh(s).min();
        for sign in [1.0, -1.0] {
            out.push(DensityMatrix::new((identity(d) + s.scale(0.5 * sign * c)).unscale(d as f64))?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoncpMetrics {
    /// `max(0, −λ_min)` of the least-squares linear fit.
    pub noncp: f64,
    /// Largest trace-norm misfit of that fit.
    pub nonlin: f64,
    /// Largest `|ξ|` over the probes, `ξ·σ = tr_B(U (τ − ρ⊗ω) U†)`.
    pub shift: f64,
    pub tau_positive: bool,
}

pub fn noncp_magnitude(model: &WeakCouplingModel, probes: &[DensityMatrix]) -> Result<NoncpMetrics> {
    let (da, db) = model.dims();
    let ba = generator_basis(da)?;
    let u = model.u_ab(model.eta);
    let mut inputs = Vec::with_capacity(probes.len());
    let mut outputs = Vec::with_capacity(probes.len());
    let mut shift = 0.0_f64;
    let mut tau_positive = true;
    for rho in probes {
        let assigned = apply_assignment(&model.assignment, rho)?;
        tau_positive &= assigned.positive;
        let out = partial_trace(&(&u * &assigned.tau * u.adjoint()), (da, db), Subsystem::A)?;
        let omega = partial_trace(&assigned.tau, (da, db), Subsystem::B)?;
        let corr = &assigned.tau - tensor(rho.matrix(), &omega);
        let moved = partial_trace(&(&u * corr * u.adjoint()), (da, db), Subsystem::A)?;
        let xi = ba.coefficients(&moved);
        shift = shift.max(xi.iter().map(|x| x * x).sum::<f64>().sqrt());
        inputs.push(rho.matrix().clone());
        outputs.push(out);
    }
    let fit = fit_linear_map(&inputs, &outputs)?;
    Ok(NoncpMetrics {
        noncp: (-fit.choi.min_eigenvalue()).max(0.0),
        nonlin: fit.residual,
        shift,
        tau_positive,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub epsilon: f64,
    pub eta: f64,
    pub metrics: NoncpMetrics,
}

/// Metrics at `ε = η = s` for each scale.
pub fn scaling_scan(model: &WeakCouplingModel, scales: &[f64]) -> Result<Vec<ScanRow>> {
    let probes = probe_states(model.dims().0)?;
    scales
        .par_iter()
        .map(|&s| {
            let m = model.at_scale(s);
            Ok(ScanRow { epsilon: s, eta: s, metrics: noncp_magnitude(&m, &probes)? })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum ScalingOutcome {
    Slope(f64),
    /// Every metric sat at the floor.
    MachinePrecision,
}

/// `geomspace(hi, lo, n)`, descending.
pub fn geometric_scales(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![hi];
    }
    let (lh, ll) = (hi.ln(), lo.ln());
    (0..n).map(|k| (lh + (ll - lh) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Least-squares slope of `log(noncp + nonlin + 1e-14)` against `log s`.
pub fn scaling_exponent(model: &WeakCouplingModel, scales: &[f64]) -> Result<ScalingOutcome> {
    if scales.len() < 4 {
        return Err(Error::InvalidArgument("need at least 4 scales".into()));
    }
    let (lo, hi) = scales.iter().fold((f64::INFINITY, 0.0_f64), |(l, h), &s| (l.min(s), h.max(s)));
    if lo <= 0.0 || hi / lo < 100.0 - 1e-9 {
        return Err(Error::InvalidArgument("scales must be positive and span two decades".into()));
    }
    if model.assignment.base.gamma_offset.amax() > 0.0 {
        return Err(Error::Unsupported(
            "constant initial correlations make the map non-CP at zeroth order; no scaling to fit".into(),
        ));
    }
    let rows = scaling_scan(model, scales)?;
    let ys: Vec<f64> = rows.iter().map(|r| r.metrics.noncp + r.metrics.nonlin).collect();
    if ys.iter().all(|y| *y < 1e-12) {
        return Ok(ScalingOutcome::MachinePrecision);
    }
    let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| (y + SCALING_FLOOR).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ls.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(ScalingOutcome::Slope(sxy / sxx))
}
