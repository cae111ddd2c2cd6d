//! Linear accessibility: can a Choi matrix be split as `D = L + (ξ·σ)⊗1`
//! with `L` completely positive?
//!
//! `f(ξ) = λ_min(D − ξ·σ⊗1)` is concave, so the test is a spectral
//! maximization. The optimizer runs gradient ascent on a soft-min smoothing
//! of `λ_min` with a decreasing temperature, then polishes with a simplex
//! search on the exact objective.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use crate::channel::{
    channel_properties, choi_of_affine, depolarizing_choi, kraus_from_choi, transpose_choi,
    AffineMapForm, ChoiMatrix, KrausSet,
};
use crate::error::{Error, Result};
use crate::linalg::{eigh, generator_basis, identity, max_abs, tensor, CMat, Spectrum};

pub const DEFAULT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessStatus {
    Accessible,
    NotAccessible,
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Starting point; zero when `None`.
    pub start: Option<Vec<f64>>,
    pub mu_start: f64,
    pub mu_end: f64,
    pub max_iters_per_stage: usize,
    pub grad_tol: f64,
    pub simplex_iters: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            start: None,
            mu_start: 1e-1,
            mu_end: 1e-10,
            max_iters_per_stage: 400,
            grad_tol: 1e-10,
            simplex_iters: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessibilityReport {
    pub status: AccessStatus,
    pub xi_star: Vec<f64>,
    pub lambda_min_star: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Spectral decomposition of `L(ξ*)` when accessible.
    pub certificate: Option<KrausSet>,
}

impl AccessibilityReport {
    /// `(certificate, ξ*)` as an affine form; `None` unless accessible.
    pub fn affine_form(&self) -> Option<AffineMapForm> {
        let k = self.certificate.clone()?;
        AffineMapForm::new(k, self.xi_star.clone()).ok()
    }
}

/// `σ_k ⊗ 1_in` for every output generator.
fn shift_generators(choi: &ChoiMatrix) -> Result<Vec<CMat>> {
    let basis = generator_basis(choi.d_out())?;
    let id = identity(choi.d_in());
    Ok(basis.sigmas().iter().map(|s| tensor(s, &id)).collect())
}

fn shifted(d: &CMat, gens: &[CMat], xi: &[f64]) -> CMat {
    let mut m = d.clone();
    for (g, x) in gens.iter().zip(xi) {
        if *x != 0.0 {
            m -= g.scale(*x);
        }
    }
    m
}

/// `L(ξ) = D − ξ·σ⊗1`.
pub fn l_of_xi(choi: &ChoiMatrix, xi: &[f64]) -> Result<ChoiMatrix> {
    let gens = shift_generators(choi)?;
    if xi.len() != gens.len() {
        return Err(Error::DimensionMismatch(format!(
            "ξ has {} entries, expected {}",
            xi.len(),
            gens.len()
        )));
    }
    ChoiMatrix::new(shifted(choi.matrix(), &gens, xi), choi.d_in(), choi.d_out())
}

/// `f(ξ) = λ_min(L(ξ))`.
pub fn shifted_lambda_min(choi: &ChoiMatrix, xi: &[f64]) -> Result<f64> {
    Ok(l_of_xi(choi, xi)?.min_eigenvalue())
}

struct Smoothed<'a> {
    d: &'a CMat,
    gens: &'a [CMat],
}

impl Smoothed<'_> {
    fn spectrum(&self, xi: &[f64]) -> Spectrum {
        eigh(&shifted(self.d, self.gens, xi))
    }

    /// `λ_min − μ log Σ exp(−(λ_i − λ_min)/μ)` and its gradient.
    fn eval(&self, xi: &[f64], mu: f64) -> (f64, Vec<f64>) {
        let spec = self.spectrum(xi);
        let lmin = spec.min();
        let w: Vec<f64> = spec.values.iter().map(|l| (-(l - lmin) / mu).exp()).collect();
        let z: f64 = w.iter().sum();
        let value = lmin - mu * z.ln();
        let mut grad = vec![0.0; self.gens.len()];
        for (i, wi) in w.iter().enumerate() {
            let p = wi / z;
            if p < 1e-16 {
                continue;
            }
            let v = spec.vector(i);
            for (k, g) in self.gens.iter().enumerate() {
                grad[k] -= p * (v.adjoint() * g * &v)[(0, 0)].re;
            }
        }
        (value, grad)
    }
}

struct NegLambda<'a>(&'a Smoothed<'a>);

impl CostFunction for NegLambda<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(-self.0.spectrum(p).min())
    }
}

struct AscentResult {
    xi: Vec<f64>,
    iterations: usize,
    stationary: bool,
}

fn smoothed_ascent(obj: &Smoothed<'_>, start: Vec<f64>, cfg: &OptimizerConfig) -> AscentResult {
    let mut xi = start;
    let mut iterations = 0;
    let mut mu = cfg.mu_start;
    let mut stationary;
    let mut step: f64 = 1.0;
    loop {
        stationary = false;
        for _ in 0..cfg.max_iters_per_stage {
            iterations += 1;
            let (f0, g) = obj.eval(&xi, mu);
            let g2: f64 = g.iter().map(|x| x * x).sum();
            if g2.sqrt() < cfg.grad_tol {
                stationary = true;
                break;
            }
            step = (step * 2.0).min(1e3);
            let mut accepted = false;
            while step > 1e-16 {
                let trial: Vec<f64> = xi.iter().zip(&g).map(|(x, gk)| x + step * gk).collect();
                if obj.eval(&trial, mu).0 >= f0 + 1e-4 * step * g2 {
                    xi = trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // no ascent direction left at this resolution
                stationary = true;
                step = 1.0;
                break;
            }
        }
        if mu <= cfg.mu_end {
            break;
        }
        mu = (mu * 0.1).max(cfg.mu_end);
    }
    AscentResult { xi, iterations, stationary }
}

fn simplex_polish(obj: &Smoothed<'_>, x0: &[f64], cfg: &OptimizerConfig) -> Option<(Vec<f64>, f64, usize)> {
    let n = x0.len();
    let h = 1e-3 * (1.0 + x0.iter().map(|x| x.abs()).fold(0.0, f64::max));
    let mut simplex = vec![x0.to_vec()];
    for k in 0..n {
        let mut p = x0.to_vec();
        p[k] += h;
        simplex.push(p);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-15).ok()?;
    let res = Executor::new(NegLambda(obj), solver)
        .configure(|s| s.max_iters(cfg.simplex_iters))
        .run()
        .ok()?;
    let state = res.state();
    let best = state.get_best_param()?.clone();
    Some((best, -state.get_best_cost(), state.get_iter() as usize))
}

/// Maximizes `λ_min(D − ξ·σ⊗1)` over `ξ`. Status: accessible when
/// `λ* ≥ −tol`; not accessible when `λ* < −10·tol` and the ascent reached a
/// stationary point; boundary otherwise.
pub fn linear_accessibility_test(
    choi: &ChoiMatrix,
    tol: f64,
    cfg: &OptimizerConfig,
) -> Result<AccessibilityReport> {
    let tp_err = max_abs(&(choi.trace_over_output() - identity(choi.d_in())));
    if tp_err > 1e-9 {
        return Err(Error::ContractViolation(format!(
            "accessibility needs a trace-preserving map (error {tp_err:.3e})"
        )));
    }
    let gens = shift_generators(choi)?;
    let obj = Smoothed { d: choi.matrix(), gens: &gens };
    let start = match &cfg.start {
        Some(s) if s.len() == gens.len() => s.clone(),
        Some(s) => {
            return Err(Error::DimensionMismatch(format!(
                "start point has {} entries, expected {}",
                s.len(),
                gens.len()
            )))
        }
        None => vec![0.0; gens.len()],
    };

    let ascent = smoothed_ascent(&obj, start, cfg);
    let mut xi = ascent.xi;
    let mut lam = obj.spectrum(&xi).min();
    let mut iterations = ascent.iterations;
    if let Some((p, l, it)) = simplex_polish(&obj, &xi, cfg) {
        iterations += it;
        if l > lam {
            xi = p;
            lam = l;
        }
    }

    let status = if lam >= -tol {
        AccessStatus::Accessible
    } else if lam < -10.0 * tol && ascent.stationary {
        AccessStatus::NotAccessible
    } else {
        AccessStatus::Boundary
    };
    let certificate = (status == AccessStatus::Accessible)
        .then(|| l_of_xi(choi, &xi).map(|l| kraus_from_choi(&l)))
        .transpose()?;
    Ok(AccessibilityReport {
        status,
        xi_star: xi,
        lambda_min_star: lam,
        iterations,
        converged: ascent.stationary,
        certificate,
    })
}

/// `−√(1 + |ξ|²)`, the smallest eigenvalue of `SWAP − ξ·σ⊗1`.
pub fn transpose_lambda_min(xi: [f64; 3]) -> f64 {
    -(1.0 + xi.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// `p·Λ_dep + (1−p)·T` on a qubit.
pub fn tprime_choi(p: f64) -> ChoiMatrix {
    depolarizing_choi(2)
        .combine(p, &transpose_choi(2), 1.0 - p)
        .expect("same dimensions")
}

/// Bisection on accessibility over `[lo, hi]` until the bracket is below `p_tol`.
pub fn accessibility_threshold(
    family: impl Fn(f64) -> Result<ChoiMatrix>,
    lo: f64,
    hi: f64,
    p_tol: f64,
    access_tol: f64,
) -> Result<f64> {
    let cfg = OptimizerConfig::default();
    let accessible = |p: f64| -> Result<bool> {
        Ok(linear_accessibility_test(&family(p)?, access_tol, &cfg)?.status == AccessStatus::Accessible)
    };
    let (mut a, mut b) = (lo, hi);
    let fa = accessible(a)?;
    if fa == accessible(b)? {
        return Err(Error::NoThreshold { lo, hi });
    }
    while b - a > p_tol {
        let m = 0.5 * (a + b);
        if accessible(m)? == fa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitalCheck {
    pub unital: bool,
    pub cp_forced: bool,
}

/// For a unital map with a constant-shift affine form, complete positivity is
/// expected; a unital but non-CP form is reported as a contract violation.
pub fn unital_cp_check(form: &AffineMapForm, tol: f64) -> Result<UnitalCheck> {
    let (di, dout) = (form.d_in(), form.d_out());
    let mixed = identity(di).unscale(di as f64);
    let image = crate::channel::apply_affine_form(form, &mixed)?;
    let unital = max_abs(&(image - identity(dout).unscale(dout as f64))) <= tol;
    if !unital {
        return Ok(UnitalCheck { unital, cp_forced: false });
    }
    let props = channel_properties(&choi_of_affine(form)?, tol);
    if !props.cp {
        return Err(Error::ContractViolation(format!(
            "unital affine form is not completely positive (λ_min = {:.3e})",
            props.min_eigenvalue
        )));
    }
    Ok(UnitalCheck { unital, cp_forced: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::{example_xi, toy_affine_form};
    use crate::channel::{choi_from_kraus, identity_choi, unitary_choi};
    use crate::random;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unitary_channel_is_accessible_at_zero() {
        let mut rng = random::rng(20);
        let d = unitary_choi(&random::unitary(&mut rng, 2));
        let r = linear_accessibility_test(&d, DEFAULT_TOL, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.status, AccessStatus::Accessible);
        assert!(r.xi_star.iter().all(|x| x.abs() < 1e-6));
        assert!(r.certificate.is_some());
    }

    #[test]
    fn transpose_is_not_accessible() {
        let r = linear_accessibility_test(&transpose_choi(2), DEFAULT_TOL, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.status, AccessStatus::NotAccessible);
        assert_abs_diff_eq!(r.lambda_min_star, -1.0, epsilon = 1e-8);
        assert!(r.xi_star.iter().all(|x| x.abs() < 1e-4));
        assert!(r.certificate.is_none());
    }

    #[test]
    fn transpose_closed_form_matches_eigensolve() {
        assert_abs_diff_eq!(transpose_lambda_min([0.0; 3]), -1.0);
        assert_abs_diff_eq!(transpose_lambda_min([0.0, 0.6, 0.8]), -(2f64.sqrt()), epsilon = 1e-15);
        assert!((transpose_lambda_min([100.0, 0.0, 0.0]) + 100.0).abs() < 1e-2);
        let t = transpose_choi(2);
        for x in [-1.5, -0.3, 0.0, 0.7] {
            for y in [-0.4, 0.2] {
                for z in [0.0, 1.1] {
                    let xi = [x, y, z];
                    let num = shifted_lambda_min(&t, &xi).unwrap();
                    assert_abs_diff_eq!(num, transpose_lambda_min(xi), epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn toy_map_is_accessible_where_not_cp() {
        let th = 0.26;
        let form = toy_affine_form(0.2, th).unwrap();
        let d = choi_of_affine(&form).unwrap();
        assert!(d.min_eigenvalue() < -1e-4);
        let r = linear_accessibility_test(&d, DEFAULT_TOL, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.status, AccessStatus::Accessible);
        let back = choi_of_affine(&r.affine_form().unwrap()).unwrap();
        assert!(max_abs(&(back.matrix() - d.matrix())) < 1e-8);
        let l = l_of_xi(&d, &r.xi_star).unwrap();
        let props = channel_properties(&l, 1e-7);
        assert!(props.trace_preserving && props.cp);
        // the construction's own shift is one feasible point
        let known = example_xi(0.2, th);
        assert!(shifted_lambda_min(&d, &known).unwrap() >= -1e-12);
    }

    #[test]
    fn non_tp_input_is_rejected() {
        let d = identity_choi(2).combine(2.0, &identity_choi(2), 0.0).unwrap();
        let err = linear_accessibility_test(&d, DEFAULT_TOL, &OptimizerConfig::default()).unwrap_err();
        assert!(err.is_contract_violation());
    }

    #[test]
    fn tprime_threshold() {
        for p in [0.0, 0.3, 2.0 / 3.0, 0.9, 1.0] {
            assert_abs_diff_eq!(tprime_choi(p).min_eigenvalue(), (3.0 * p - 2.0) / 2.0, epsilon = 1e-12);
        }
        let p = accessibility_threshold(|p| Ok(tprime_choi(p)), 0.0, 1.0, 1e-7, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(p, 2.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn cp_family_has_no_threshold() {
        let fam = |p: f64| identity_choi(2).combine(p, &depolarizing_choi(2), 1.0 - p);
        let err = accessibility_threshold(fam, 0.0, 1.0, 1e-6, DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::NoThreshold { .. }));
    }

    #[test]
    fn unital_check_examples() {
        let mut rng = random::rng(21);
        let u = random::unitary(&mut rng, 2);
        let form = AffineMapForm::new(KrausSet::cp(vec![u.into_inner()]), vec![0.0; 3]).unwrap();
        assert_eq!(unital_cp_check(&form, 1e-9).unwrap(), UnitalCheck { unital: true, cp_forced: true });

        let form = toy_affine_form(0.2, 0.5).unwrap();
        assert_eq!(unital_cp_check(&form, 1e-9).unwrap(), UnitalCheck { unital: false, cp_forced: false });
    }

    fn unitality_restored(kraus: KrausSet) -> AffineMapForm {
        let d = kraus.shape().unwrap().0;
        let basis = generator_basis(d).unwrap();
        let image = kraus.apply(&identity(d).unscale(d as f64));
        let xi = basis.coefficients(&image).iter().map(|x| -x).collect();
        AffineMapForm::new(kraus, xi).unwrap()
    }

    #[test]
    fn restoring_unitality_keeps_qubit_maps_cp() {
        let mut rng = random::rng(22);
        for n in 1..=4 {
            let form = unitality_restored(random::cptp_kraus(&mut rng, 2, 2, n));
            let check = unital_cp_check(&form, 1e-9).unwrap();
            assert!(check.unital && check.cp_forced);
        }
    }

    #[test]
    fn restoring_unitality_can_break_cp_for_qutrits() {
        // |1⟩ decays into |0⟩, |2⟩ is untouched
        let mut k0 = CMat::zeros(3, 3);
        let mut k1 = CMat::zeros(3, 3);
        k0[(0, 0)] = crate::linalg::cr(1.0);
        k0[(2, 2)] = crate::linalg::cr(1.0);
        k1[(0, 1)] = crate::linalg::cr(1.0);
        let kraus = KrausSet::cp(vec![k0, k1]);
        assert!(channel_properties(&choi_from_kraus(&kraus).unwrap(), 1e-12).trace_preserving);
        let form = unitality_restored(kraus);
        let err = unital_cp_check(&form, 1e-9).unwrap_err();
        assert!(err.is_contract_violation());
        assert_abs_diff_eq!(choi_of_affine(&form).unwrap().min_eigenvalue(), -1.0 / 3.0, epsilon = 1e-12);
    }
}
