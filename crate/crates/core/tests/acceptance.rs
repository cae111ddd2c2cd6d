//! Acceptance suite. Prints one line per criterion and fails if any does.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use noncp_core::access::{
    accessibility_threshold, linear_accessibility_test, shifted_lambda_min, tprime_choi,
    transpose_lambda_min, unital_cp_check, AccessStatus, OptimizerConfig, DEFAULT_TOL,
};
use noncp_core::affine::{example_unitary, ppt_check, spectrum_sweep, theta_grid, toy_affine_form};
use noncp_core::apps::{
    decoupling_sequence, distinguishability_gain, dephasing_copy_demo, recovery_map_choi,
    DecouplingModel,
};
use noncp_core::channel::{
    apply_choi, channel_properties, choi_from_kraus, choi_of_affine, kraus_from_choi,
    transpose_choi, AffineMapForm, KrausSet,
};
use noncp_core::fano::{toy_domain_radius, toy_extension, toy_positivity_max};
use noncp_core::linalg::{
    cr, eigh, generator_basis, identity, max_abs, partial_trace, paulis, tensor,
    trace_distance, CMat, DensityMatrix, Subsystem,
};
use noncp_core::perturb::{geometric_scales, scaling_exponent, ScalingOutcome, WeakCouplingModel};
use noncp_core::random;
use noncp_core::tomo::{
    linear_inversion, project_to_cptp, simulate_tomography, template_comparison,
    tomographic_inputs, FitModel, DEFAULT_TIE_TOL,
};

type Outcome = Result<String, String>;

// written as a negation so that NaN fails the check
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Eigenvalues of a Hermitian matrix through the real symmetric embedding
/// `[[Re, −Im], [Im, Re]]`, whose spectrum is the original one doubled.
fn real_embedding_eigenvalues(m: &CMat) -> Vec<f64> {
    let n = m.nrows();
    let big = DMatrix::<f64>::from_fn(2 * n, 2 * n, |i, j| {
        let z = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let mut ev: Vec<f64> = big.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

fn bisect(mut lo: f64, mut hi: f64, good: impl Fn(f64) -> bool) -> f64 {
    // good(lo) holds, good(hi) does not
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if good(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn criterion_1() -> Outcome {
    let t = transpose_choi(2);
    let grid: Vec<f64> = (0..5).map(|k| -2.0 + k as f64).collect();
    let mut worst = 0.0_f64;
    for &x in &grid {
        for &y in &grid {
            for &z in &grid {
                let xi = [x, y, z];
                let num = shifted_lambda_min(&t, &xi).map_err(|e| e.to_string())?;
                worst = worst.max((num - transpose_lambda_min(xi)).abs());
            }
        }
    }
    ensure!(worst <= 1e-9, "closed form off by {worst:.2e}");
    let r = linear_accessibility_test(&t, DEFAULT_TOL, &OptimizerConfig::default()).map_err(|e| e.to_string())?;
    ensure!(r.status == AccessStatus::NotAccessible, "status {:?}", r.status);
    let lam = r.lambda_min_star;
    ensure!((-1.0 - 1e-6..=-1.0 + 1e-3).contains(&lam), "λ* = {lam}");
    Ok(format!("grid error {worst:.1e}, λ* = {lam:.12}"))
}

fn criterion_2() -> Outcome {
    // closed-form oracle: λ_min = (3p − 2)/2 vanishes at p = 2/3
    let mut worst = 0.0_f64;
    for k in 0..=20 {
        let p = k as f64 / 20.0;
        worst = worst.max((tprime_choi(p).min_eigenvalue() - (3.0 * p - 2.0) / 2.0).abs());
    }
    ensure!(worst < 1e-12, "min eigenvalue off closed form by {worst:.2e}");
    let oracle = 2.0 / 3.0;
    let p = accessibility_threshold(|p| Ok(tprime_choi(p)), 0.0, 1.0, 1e-8, DEFAULT_TOL).map_err(|e| e.to_string())?;
    ensure!((p - oracle).abs() <= 1e-6, "p* = {p}");
    Ok(format!("p* = {p:.9}"))
}

fn criterion_3() -> Outcome {
    let dir = unit([1.0, -2.0, 2.0]);
    let lmin = |norm: f64, a: f64| {
        let alpha = [dir[0] * norm, dir[1] * norm, dir[2] * norm];
        eigh(&toy_extension(alpha, a).expect("|α| ≤ 1")).min()
    };
    let mut worst = 0.0_f64;
    for k in 0..=10 {
        let norm = (k as f64 / 10.0).min(1.0);
        let root = bisect(0.0, 1.0, |a| lmin(norm, a) >= -1e-15);
        let closed = toy_positivity_max(norm).map_err(|e| e.to_string())?;
        worst = worst.max((root - closed).abs());
    }
    ensure!(worst <= 1e-9, "a_max off numeric root by {worst:.2e}");
    let mut worst_r = 0.0_f64;
    for a in [0.0, 0.1, 0.2] {
        let root = bisect(0.0, 1.0, |r| lmin(r, a) >= -1e-15);
        let closed = toy_domain_radius(a).map_err(|e| e.to_string())?;
        worst_r = worst_r.max((root - closed).abs());
    }
    ensure!(worst_r <= 1e-9, "radius off numeric root by {worst_r:.2e}");
    Ok(format!("a_max error {worst:.1e}, radius error {worst_r:.1e}"))
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0_f64;
    for a in [0.1, 0.2] {
        for theta in theta_grid(21) {
            let form = toy_affine_form(a, theta).map_err(|e| e.to_string())?;
            let want = [0.0, 0.0, a * (2.0 * theta).sin() / 2.0];
            for (x, w) in form.xi.iter().zip(want) {
                worst = worst.max((x - w).abs());
            }
        }
    }
    ensure!(worst <= 1e-12, "ξ off by {worst:.2e}");
    Ok(format!("ξ error {worst:.1e}"))
}

/// Choi matrix of `X ↦ tr_B U (X⊗1/2 + tr X·(a/4)Σσ⊗σ) U†`, built entry by entry.
fn toy_choi_oracle(a: f64, theta: f64) -> CMat {
    let u = example_unitary(theta).into_inner();
    let corr = paulis().iter().fold(CMat::zeros(4, 4), |acc, s| acc + tensor(s, s)).scale(a / 4.0);
    let mut d = CMat::zeros(4, 4);
    for s in 0..2 {
        for t in 0..2 {
            let mut e = CMat::zeros(2, 2);
            e[(s, t)] = cr(1.0);
            let mut x = tensor(&e, &identity(2).scale(0.5));
            if s == t {
                x += &corr;
            }
            let out = partial_trace(&(&u * x * u.adjoint()), (2, 2), Subsystem::A).expect("dims");
            for m in 0..2 {
                for n in 0..2 {
                    d[(m * 2 + s, n * 2 + t)] = out[(m, n)];
                }
            }
        }
    }
    d
}

fn criterion_5() -> Outcome {
    let a = 0.2;
    let thetas = theta_grid(201);
    let rows = spectrum_sweep(a, &thetas).map_err(|e| e.to_string())?;
    let min = rows.iter().map(|r| r.eigenvalues[0]).fold(f64::INFINITY, f64::min);
    ensure!(min < 0.0, "sweep never leaves the CP cone (min {min})");
    let most_negative = rows.iter().map(|r| r.eigenvalues.iter().filter(|l| **l < -1e-12).count()).max().unwrap_or(0);
    ensure!(most_negative <= 3, "{most_negative} eigenvalues negative at once");
    let mut period = 0.0_f64;
    for i in 0..=100 {
        for k in 0..4 {
            period = period.max((rows[i].eigenvalues[k] - rows[i + 100].eigenvalues[k]).abs());
        }
    }
    ensure!(period <= 1e-10, "not π-periodic: {period:.2e}");
    let mut branch = 0.0_f64;
    for r in &rows {
        let ev = real_embedding_eigenvalues(&toy_choi_oracle(a, r.theta));
        for (x, y) in ev.iter().zip(r.eigenvalues) {
            branch = branch.max((x - y).abs());
        }
    }
    ensure!(branch <= 1e-10, "branches differ from independent eigensolve by {branch:.2e}");
    Ok(format!("min λ = {min:.6}, max #negative = {most_negative}, period {period:.1e}, branch {branch:.1e}"))
}

fn criterion_6() -> Outcome {
    let a_max = toy_positivity_max(0.0).map_err(|e| e.to_string())?;
    let dirs = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], unit([1.0, -2.0, 2.0])];
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for i in 1..=10 {
        let a = a_max * i as f64 / 10.0;
        let radius = toy_domain_radius(a.min(1.0 / 3.0)).map_err(|e| e.to_string())?;
        for j in 0..10 {
            let norm = radius * j as f64 / 9.0;
            for dir in &dirs {
                let alpha = [dir[0] * norm, dir[1] * norm, dir[2] * norm];
                let tau = toy_extension(alpha, a).map_err(|e| e.to_string())?;
                let rep = ppt_check(&tau, (2, 2)).map_err(|e| e.to_string())?;
                ensure!(rep.ppt, "PPT fails at a={a}, α={alpha:?}: {}", rep.min_pt_eigenvalue);
                worst = worst.min(rep.min_pt_eigenvalue);
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} points, smallest PT eigenvalue {worst:.2e}"))
}

fn criterion_7() -> Outcome {
    let mut rng = random::rng(700);
    let basis = generator_basis(2).map_err(|e| e.to_string())?;
    let mut worst = f64::INFINITY;
    for k in 0..100 {
        let kraus = random::cptp_kraus(&mut rng, 2, 2, 1 + k % 4);
        let image = kraus.apply(&identity(2).scale(0.5));
        let xi: Vec<f64> = basis.coefficients(&image).iter().map(|x| -x).collect();
        let form = AffineMapForm::new(kraus, xi).map_err(|e| e.to_string())?;
        let check = unital_cp_check(&form, 1e-9).map_err(|e| format!("draw {k}: {e}"))?;
        ensure!(check.unital, "draw {k} not unital");
        let l = choi_of_affine(&form).map_err(|e| e.to_string())?.min_eigenvalue();
        ensure!(l >= -1e-9, "draw {k}: λ_min = {l}");
        worst = worst.min(l);
    }
    Ok(format!("100 forms, smallest Choi eigenvalue {worst:.2e}"))
}

fn criterion_8() -> Outcome {
    let mut rng = random::rng(800);
    let scales = geometric_scales(1e-1, 1e-3, 8);
    let mut slopes = Vec::new();
    for k in 0..5 {
        let model = WeakCouplingModel::random(&mut rng, 2, 2, 0.0, 0.0).map_err(|e| e.to_string())?;
        match scaling_exponent(&model, &scales).map_err(|e| e.to_string())? {
            ScalingOutcome::Slope(s) => {
                ensure!((1.8..=2.2).contains(&s), "model {k}: slope {s}");
                slopes.push(format!("{s:.3}"));
            }
            ScalingOutcome::MachinePrecision => slopes.push("floor".into()),
        }
    }
    Ok(format!("slopes [{}]", slopes.join(", ")))
}

fn criterion_9() -> Outcome {
    let mut rng = random::rng(900);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let rho = random::density(&mut rng, 2);
        let omega = random::density(&mut rng, 2);
        let t = random::uniform(&mut rng, 0.0, 3.0);
        let out = decoupling_sequence(&DecouplingModel::spin_echo(1.0, t), &rho, &omega).map_err(|e| e.to_string())?;
        worst = worst.max(trace_distance(&out, rho.matrix()).map_err(|e| e.to_string())?);
    }
    ensure!(worst <= 1e-12, "recovery error {worst:.2e}");

    // cos(2gt) = 1/2
    let model = DecouplingModel::spin_echo(1.0, PI / 6.0);
    let r = recovery_map_choi(&model, &DensityMatrix::maximally_mixed(2)).map_err(|e| e.to_string())?;
    ensure!(r.min_eigenvalue < -0.05, "recovery map λ_min = {}", r.min_eigenvalue);
    let [x, _, _] = paulis();
    let rp = (identity(2) + x.scale(0.4)).scale(0.5);
    let rm = (identity(2) - x.scale(0.4)).scale(0.5);
    let before = trace_distance(&rp, &rm).map_err(|e| e.to_string())?;
    let after = trace_distance(
        &apply_choi(&r.choi, &rp).map_err(|e| e.to_string())?,
        &apply_choi(&r.choi, &rm).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    ensure!((after / before - 2.0).abs() < 1e-12, "distance ratio {}", after / before);
    Ok(format!("recovery error {worst:.1e}, λ_min = {:.6}, distance {before:.3} -> {after:.3}", r.min_eigenvalue))
}

fn criterion_10() -> Outcome {
    let ch = dephasing_copy_demo();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = DensityMatrix::pure(&[cr(h), cr(h)]).map_err(|e| e.to_string())?;
    let minus = DensityMatrix::pure(&[cr(h), cr(-h)]).map_err(|e| e.to_string())?;
    let g = distinguishability_gain(&ch, &plus, &minus).map_err(|e| e.to_string())?;
    ensure!((g.assisted - 2.0).abs() <= 1e-12, "assisted {}", g.assisted);
    ensure!(g.unassisted.abs() <= 1e-12, "unassisted {}", g.unassisted);
    Ok(format!("assisted {:.12}, unassisted {:.1e}", g.assisted, g.unassisted))
}

fn criterion_11() -> Outcome {
    let mut rng = random::rng(1100);
    let mut worst = 0.0_f64;
    for d in [2, 3] {
        let inputs = tomographic_inputs(d).map_err(|e| e.to_string())?;
        for k in 0..5 {
            let truth = choi_from_kraus(&random::cptp_kraus(&mut rng, d, d, 1 + k)).map_err(|e| e.to_string())?;
            let rec = simulate_tomography(&truth, &inputs, None, 0).map_err(|e| e.to_string())?;
            let fit = linear_inversion(&rec).map_err(|e| e.to_string())?;
            worst = worst.max(max_abs(&(fit.choi.matrix() - truth.matrix())));
        }
    }
    ensure!(worst <= 1e-10, "linear truths recovered to {worst:.2e}");

    let inputs = tomographic_inputs(2).map_err(|e| e.to_string())?;
    let rec = simulate_tomography(&transpose_choi(2), &inputs, None, 0).map_err(|e| e.to_string())?;
    let t_fit = linear_inversion(&rec).map_err(|e| e.to_string())?;
    let lt = t_fit.choi.min_eigenvalue();
    ensure!((lt + 1.0).abs() <= 1e-10, "transpose λ_min = {lt}");

    let mut to_project = vec![t_fit.choi.clone()];
    for seed in 0..10 {
        let truth = choi_from_kraus(&random::cptp_kraus(&mut rng, 2, 2, 2)).map_err(|e| e.to_string())?;
        let rec = simulate_tomography(&truth, &inputs, Some(200), seed).map_err(|e| e.to_string())?;
        to_project.push(linear_inversion(&rec).map_err(|e| e.to_string())?.choi);
    }
    for (k, choi) in to_project.iter().enumerate() {
        let p = project_to_cptp(choi, 2000, 1e-9).map_err(|e| e.to_string())?;
        let props = channel_properties(&p.choi, 1e-9);
        ensure!(props.trace_preserving && props.cp, "projection {k} left λ_min = {}", props.min_eigenvalue);
    }

    let non_cp: Vec<f64> = spectrum_sweep(0.2, &theta_grid(101))
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter(|r| r.eigenvalues[0] < -1e-3)
        .map(|r| r.theta)
        .collect();
    ensure!(non_cp.len() >= 3, "toy sweep has too few non-CP angles");
    let mut truths: Vec<AffineMapForm> = non_cp
        .iter()
        .step_by(non_cp.len() / 3)
        .map(|&th| toy_affine_form(0.2, th))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for _ in 0..3 {
        let u = random::unitary(&mut rng, 2).into_inner();
        let xi: Vec<f64> = (0..3).map(|_| random::uniform(&mut rng, -0.15, 0.15)).collect();
        truths.push(AffineMapForm::new(KrausSet::cp(vec![u]), xi).map_err(|e| e.to_string())?);
    }
    let mut margin = f64::INFINITY;
    for (k, truth) in truths.iter().enumerate() {
        let l = choi_of_affine(truth).map_err(|e| e.to_string())?.min_eigenvalue();
        ensure!(l < -1e-4, "truth {k} is CP (λ_min {l})");
        let rec = simulate_tomography(truth, &inputs, None, 0).map_err(|e| e.to_string())?;
        let ranked = template_comparison(&rec, DEFAULT_TIE_TOL, DEFAULT_TOL).map_err(|e| e.to_string())?;
        ensure!(ranked[0].model == FitModel::AffineWithShift, "truth {k}: winner {:?}", ranked[0].model);
        let cp = ranked.iter().find(|f| f.model == FitModel::LinearCp).expect("cp template");
        let m = cp.residual / ranked[0].residual.max(1e-12);
        ensure!(m >= 10.0, "truth {k}: margin {m}");
        margin = margin.min(m);
    }
    Ok(format!("linear error {worst:.1e}, transpose λ_min {lt:.12}, smallest margin {margin:.1e}"))
}

fn criterion_12() -> Outcome {
    let mut rng = random::rng(1200);
    let mut round = 0.0_f64;
    let mut trace = 0.0_f64;
    for d in [2, 3] {
        for n in 1..=4 {
            let kraus = random::cptp_kraus(&mut rng, d, d, n);
            let choi = choi_from_kraus(&kraus).map_err(|e| e.to_string())?;
            let back = choi_from_kraus(&kraus_from_choi(&choi)).map_err(|e| e.to_string())?;
            round = round.max(max_abs(&(back.matrix() - choi.matrix())));
            trace = trace.max((choi.eigenvalues().iter().sum::<f64>() - d as f64).abs());
        }
    }
    ensure!(round <= 1e-10, "round trip error {round:.2e}");
    ensure!(trace <= 1e-10, "Σλ off d by {trace:.2e}");
    let mut slack = f64::INFINITY;
    for k in 0..200 {
        let d = 2 + k % 2;
        let kraus = random::cptp_kraus(&mut rng, d, d, 1 + k % 3);
        let r1 = random::density(&mut rng, d);
        let r2 = random::density(&mut rng, d);
        let before = trace_distance(r1.matrix(), r2.matrix()).map_err(|e| e.to_string())?;
        let after = trace_distance(&kraus.apply(r1.matrix()), &kraus.apply(r2.matrix())).map_err(|e| e.to_string())?;
        ensure!(after <= before + 1e-12, "draw {k}: {before} -> {after}");
        slack = slack.min(before - after);
    }
    Ok(format!("round trip {round:.1e}, Σλ error {trace:.1e}, smallest contraction slack {slack:.1e}"))
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 12] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL ({why})");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
