//! Process tomography on simulated data: linear inversion, projection onto
//! CPTP maps and comparison of fit templates.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::access::{l_of_xi, linear_accessibility_test, OptimizerConfig};
use crate::channel::{
    apply_affine_form, apply_choi, channel_properties, difference_form, fit_linear_map, max_misfit,
    AffineMapForm, ChoiMatrix, DifferenceForm,
};
use crate::error::{Error, Result};
use crate::json::MatrixJson;
use crate::linalg::{
    eigh, generator_basis, hermitian_part, identity, max_abs, tensor, trace_norm_hermitian, CMat,
    DensityMatrix,
};
use crate::random;

/// Anything that maps `d_in × d_in` inputs to `d_out × d_out` outputs.
pub trait MapEvaluator {
    fn d_in(&self) -> usize;
    fn d_out(&self) -> usize;
    fn evaluate(&self, rho: &CMat) -> Result<CMat>;
}

impl MapEvaluator for ChoiMatrix {
    fn d_in(&self) -> usize {
        ChoiMatrix::d_in(self)
    }

    fn d_out(&self) -> usize {
        ChoiMatrix::d_out(self)
    }

    fn evaluate(&self, rho: &CMat) -> Result<CMat> {
        apply_choi(self, rho)
    }
}

impl MapEvaluator for AffineMapForm {
    fn d_in(&self) -> usize {
        AffineMapForm::d_in(self)
    }

    fn d_out(&self) -> usize {
        AffineMapForm::d_out(self)
    }

    fn evaluate(&self, rho: &CMat) -> Result<CMat> {
        apply_affine_form(self, rho)
    }
}

pub struct FnMap<F> {
    pub d_in: usize,
    pub d_out: usize,
    pub f: F,
}

impl<F: Fn(&CMat) -> Result<CMat>> MapEvaluator for FnMap<F> {
    fn d_in(&self) -> usize {
        self.d_in
    }

    fn d_out(&self) -> usize {
        self.d_out
    }

    fn evaluate(&self, rho: &CMat) -> Result<CMat> {
        (self.f)(rho)
    }
}

/// `{1/d} ∪ {(1 + c_i σ_i)/d}` with `c_i = −1/λ_min(σ_i)`, so each non-central
/// input sits on the boundary of the state space.
pub fn tomographic_inputs(d: usize) -> Result<Vec<DensityMatrix>> {
    let basis = generator_basis(d)?;
    let mut out = vec![DensityMatrix::maximally_mixed(d)];
    for s in basis.sigmas() {
        let c = -1.0 / eigh(s).min();
        out.push(DensityMatrix::new((identity(d) + s.scale(c)).unscale(d as f64))?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TomographyRecord {
    pub inputs: Vec<DensityMatrix>,
    /// Exact images, or estimates rebuilt from sampled generator expectations.
    pub outputs: Vec<CMat>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordJson {
    pub inputs: Vec<MatrixJson>,
    pub outputs: Vec<MatrixJson>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
}

impl TomographyRecord {
    pub fn input_matrices(&self) -> Vec<CMat> {
        self.inputs.iter().map(|r| r.matrix().clone()).collect()
    }

    pub fn to_json(&self) -> RecordJson {
        RecordJson {
            inputs: self.inputs.iter().map(|r| MatrixJson::from_matrix(r.matrix())).collect(),
            outputs: self.outputs.iter().map(MatrixJson::from_matrix).collect(),
            shots: self.shots,
            seed: self.seed,
        }
    }
}

fn check_complete(inputs: &[DensityMatrix]) -> Result<()> {
    let d = inputs.first().map(|r| r.dim()).ok_or_else(|| Error::RankDeficient("no inputs".into()))?;
    let m = CMat::from_fn(d * d, inputs.len(), |r, j| inputs[j].matrix()[(r / d, r % d)]);
    let sv = m.svd(false, false).singular_values;
    let rank = sv.iter().filter(|s| **s > 1e-10).count();
    if rank < d * d {
        return Err(Error::RankDeficient(format!("inputs span {rank} of {} dimensions", d * d)));
    }
    Ok(())
}

/// Measures every generator `shots` times in its eigenbasis and rebuilds
/// `1/d + Σ ⟨σ_i⟩ σ_i / 2`. Negative outcome weights (non-positive images)
/// are clipped before sampling.
fn sample_state<R: Rng + ?Sized>(rng: &mut R, state: &CMat, shots: u64) -> Result<CMat> {
    let d = state.nrows();
    let basis = generator_basis(d)?;
    let mut est = identity(d).unscale(d as f64);
    for s in basis.sigmas() {
        let spec = eigh(s);
        let probs: Vec<f64> = (0..d)
            .map(|k| {
                let v = spec.vector(k);
                (v.adjoint() * state * &v)[(0, 0)].re.max(0.0)
            })
            .collect();
        let total: f64 = probs.iter().sum();
        let mut left = shots;
        let mut mass = 1.0;
        let mut mean = 0.0;
        for (k, p) in probs.iter().enumerate() {
            let p = p / total;
            let n = if k + 1 == d || left == 0 {
                left
            } else {
                let q = (p / mass).clamp(0.0, 1.0);
                Binomial::new(left, q)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?
                    .sample(rng)
            };
            mean += spec.values[k] * n as f64;
            left -= n;
            mass -= p;
        }
        est += s.scale(0.5 * mean / shots as f64);
    }
    Ok(est)
}

pub fn simulate_tomography(
    truth: &dyn MapEvaluator,
    inputs: &[DensityMatrix],
    shots: Option<u64>,
    seed: u64,
) -> Result<TomographyRecord> {
    check_complete(inputs)?;
    if inputs.iter().any(|r| r.dim() != truth.d_in()) {
        return Err(Error::DimensionMismatch("inputs do not match the map".into()));
    }
    let exact: Vec<CMat> = inputs.iter().map(|r| truth.evaluate(r.matrix())).collect::<Result<_>>()?;
    let outputs = match shots {
        None => exact,
        Some(0) => return Err(Error::InvalidArgument("shots must be positive".into())),
        Some(n) => {
            let mut rng = random::rng(seed);
            exact.iter().map(|o| sample_state(&mut rng, o, n)).collect::<Result<_>>()?
        }
    };
    Ok(TomographyRecord { inputs: inputs.to_vec(), outputs, shots, seed: shots.map(|_| seed) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    LinearCp,
    AffineWithShift,
    LinearUnconstrained,
}

impl FitModel {
    /// Lower is simpler.
    fn parsimony(self) -> u8 {
        match self {
            FitModel::LinearCp => 0,
            FitModel::AffineWithShift => 1,
            FitModel::LinearUnconstrained => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// For the affine template this is the CP part only.
    pub choi: ChoiMatrix,
    pub residual: f64,
    pub model: FitModel,
    pub xi: Option<Vec<f64>>,
    pub difference: Option<DifferenceForm>,
}

impl FitResult {
    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        let out = apply_choi(&self.choi, rho)?;
        Ok(match &self.xi {
            Some(xi) => out + generator_basis(self.choi.d_out())?.combine(xi).scale(rho.trace().re),
            None => out,
        })
    }
}

pub fn linear_inversion(rec: &TomographyRecord) -> Result<FitResult> {
    let fit = fit_linear_map(&rec.input_matrices(), &rec.outputs)?;
    Ok(FitResult {
        choi: fit.choi,
        residual: fit.residual,
        model: FitModel::LinearUnconstrained,
        xi: None,
        difference: None,
    })
}

fn misfit(fit: &FitResult, rec: &TomographyRecord) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (rho, out) in rec.inputs.iter().zip(&rec.outputs) {
        let diff = fit.apply(rho.matrix())? - out;
        worst = worst.max(trace_norm_hermitian(&hermitian_part(&diff)));
    }
    Ok(worst)
}

/// CP part plus constant shift. The shift is the one that makes the CP part
/// as positive as possible; if even that part is not PSD it is projected.
pub fn fit_affine(rec: &TomographyRecord, tol: f64) -> Result<FitResult> {
    let lin = fit_linear_map(&rec.input_matrices(), &rec.outputs)?;
    let report = linear_accessibility_test(&lin.choi, tol, &OptimizerConfig::default())?;
    let mut part = l_of_xi(&lin.choi, &report.xi_star)?;
    if part.min_eigenvalue() < -tol {
        part = project_to_cptp(&part, 2000, tol)?.choi;
    }
    let mut fit = FitResult {
        choi: part,
        residual: 0.0,
        model: FitModel::AffineWithShift,
        xi: Some(report.xi_star),
        difference: None,
    };
    fit.residual = misfit(&fit, rec)?;
    Ok(fit)
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub choi: ChoiMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Frobenius distance from the input.
    pub distance: f64,
}

fn psd_part(m: &CMat) -> CMat {
    eigh(m).reassemble_with(|l| crate::linalg::cr(l.max(0.0)))
}

/// `D − 1_out ⊗ (tr_out D − 1_in)/d_out`.
fn tp_part(m: &CMat, d_in: usize, d_out: usize) -> CMat {
    let choi = ChoiMatrix::from_hermitian_unchecked(m.clone(), d_in, d_out);
    let excess = choi.trace_over_output() - identity(d_in);
    m - tensor(&identity(d_out), &excess).unscale(d_out as f64)
}

/// Dykstra alternation between the PSD cone and the TP subspace, finished by
/// a TP projection and, if needed, a small admixture of `1/d_out` which
/// restores positivity without touching the trace condition.
pub fn project_to_cptp(choi: &ChoiMatrix, max_iter: usize, tol: f64) -> Result<Projection> {
    let (di, dout) = (choi.d_in(), choi.d_out());
    let start = hermitian_part(choi.matrix());
    let mut x = start.clone();
    let mut p = CMat::zeros(x.nrows(), x.ncols());
    let mut q = p.clone();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..max_iter {
        iterations += 1;
        let y = tp_part(&(&x + &p), di, dout);
        p = &x + &p - &y;
        let xn = psd_part(&(&y + &q));
        q = &y + &q - &xn;
        let step = max_abs(&(&xn - &x));
        x = xn;
        let tp_err = max_abs(&(tp_part(&x, di, dout) - &x));
        if tp_err <= tol * 0.1 && step <= tol * 0.1 {
            converged = true;
            break;
        }
    }
    x = tp_part(&x, di, dout);
    let lmin = eigh(&x).min();
    if lmin < 0.0 {
        let floor = 1.0 / dout as f64;
        let w = -lmin / (floor - lmin);
        x = x.scale(1.0 - w) + identity(di * dout).scale(w * floor);
    }
    let out = ChoiMatrix::from_hermitian_unchecked(hermitian_part(&x), di, dout);
    let props = channel_properties(&out, tol);
    debug_assert!(props.trace_preserving && props.cp);
    let distance = (out.matrix() - &start).norm();
    Ok(Projection { choi: out, iterations, converged, distance })
}

pub const DEFAULT_TIE_TOL: f64 = 1e-4;

/// Fits the three templates and orders them by residual; residuals within
/// `tie_tol` of each other are ordered by simplicity.
pub fn template_comparison(rec: &TomographyRecord, tie_tol: f64, tol: f64) -> Result<Vec<FitResult>> {
    let mut unconstrained = linear_inversion(rec)?;
    if unconstrained.choi.min_eigenvalue() < -tol {
        unconstrained.difference = Some(difference_form(&unconstrained.choi));
    }
    let projected = project_to_cptp(&unconstrained.choi, 2000, tol)?.choi;
    let residual = max_misfit(&projected, &rec.input_matrices(), &rec.outputs)?;
    let cp = FitResult { choi: projected, residual, model: FitModel::LinearCp, xi: None, difference: None };
    let affine = fit_affine(rec, tol)?;

    let mut fits = vec![cp, affine, unconstrained];
    fits.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    let mut bucket = 0;
    let mut anchor = fits[0].residual;
    let mut keyed: Vec<(usize, u8, FitResult)> = Vec::with_capacity(3);
    for f in fits {
        if f.residual > anchor + tie_tol {
            bucket += 1;
            anchor = f.residual;
        }
        keyed.push((bucket, f.model.parsimony(), f));
    }
    keyed.sort_by_key(|(b, p, _)| (*b, *p));
    Ok(keyed.into_iter().map(|(_, _, f)| f).collect())
}
