use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use noncp_core::access::{
    accessibility_threshold, l_of_xi, linear_accessibility_test, tprime_choi, OptimizerConfig,
    DEFAULT_TOL,
};
use noncp_core::affine::{spectrum_sweep, theta_grid, toy_affine_form};
use noncp_core::apps::{
    decoupling_sequence, dephasing_copy_demo, distinguishability_gain, recovery_map_choi,
    DecouplingModel,
};
use noncp_core::channel::{
    channel_properties, choi_from_kraus, depolarizing_choi, difference_form, identity_choi,
    transpose_choi, DifferenceForm, KrausSet,
};
use noncp_core::fano::{apply_assignment, AssignmentJson};
use noncp_core::json::{ChoiJson, MatrixJson};
use noncp_core::linalg::{cr, trace_distance, DensityMatrix};
use noncp_core::perturb::{geometric_scales, scaling_exponent, scaling_scan, WeakCouplingModel};
use noncp_core::random;
use noncp_core::tomo::{
    simulate_tomography, template_comparison, tomographic_inputs, FitResult, MapEvaluator,
    DEFAULT_TIE_TOL,
};

#[derive(Parser)]
#[command(name = "noncp", version, about = "Non-CP quantum dynamical maps: sweeps, tests and demos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choi spectrum of the two-qubit toy map over θ ∈ [0, 2π], as CSV
    Sweep {
        #[arg(long, default_value_t = 0.2)]
        a: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linear accessibility
    #[command(subcommand)]
    Access(AccessCmd),
    /// Weak-coupling scaling of the non-CP magnitude
    #[command(subcommand)]
    Perturb(PerturbCmd),
    /// Spin-echo decoupling and its recovery map
    Decouple {
        #[arg(long, default_value_t = 1.0)]
        g: f64,
        #[arg(long, default_value_t = 0.7)]
        t: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Environment-assisted channels
    #[command(subcommand)]
    Assist(AssistCmd),
    /// Simulated process tomography
    #[command(subcommand)]
    Tomo(TomoCmd),
    /// Choi matrix utilities
    #[command(subcommand)]
    Channel(ChannelCmd),
}

#[derive(Subcommand)]
enum AccessCmd {
    /// Decide whether a Choi matrix splits as CP part plus constant shift
    Test {
        #[arg(long)]
        choi: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bisect for the accessibility threshold of a one-parameter family
    Threshold {
        #[arg(long, default_value = "tprime")]
        family: String,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PerturbCmd {
    /// Metrics at ε = η = s for each scale, as CSV
    Scan {
        #[arg(long)]
        config: PathBuf,
        /// hi:lo:n, geometric
        #[arg(long, default_value = "1e-1:1e-3:8")]
        scales: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AssistCmd {
    /// Dephasing channel whose environment keeps a copy of the input
    Demo {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TomoCmd {
    /// Simulate data from a truth map and rank the fit templates
    Run {
        /// toy:a=..,theta=.. | transpose | identity | depolarizing | tprime:p=.. | choi:<file>
        #[arg(long)]
        truth: String,
        #[arg(long)]
        shots: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ChannelCmd {
    /// Trace preservation, unitality and complete positivity
    Props(ChoiArgs),
    /// Split into a difference of two CP maps
    Split(ChoiArgs),
    /// Apply an assignment map to a state
    Assign {
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long)]
        rho: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ChoiArgs {
    #[arg(long)]
    choi: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Random weak-coupling model; absent fields take the defaults below.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfig {
    #[serde(default = "two")]
    d_a: usize,
    #[serde(default = "two")]
    d_b: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    t: f64,
}

fn two() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn emit_json(out: Option<&Path>, v: &Value) -> anyhow::Result<()> {
    emit(out, &(serde_json::to_string_pretty(v)? + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_choi(path: &Path) -> anyhow::Result<noncp_core::channel::ChoiMatrix> {
    Ok(read_json::<ChoiJson>(path)?.to_choi()?)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn kraus_choi(k: &KrausSet, d_in: usize, d_out: usize) -> anyhow::Result<Value> {
    if k.is_empty() {
        let zero = noncp_core::channel::ChoiMatrix::new(
            noncp_core::linalg::CMat::zeros(d_in * d_out, d_in * d_out),
            d_in,
            d_out,
        )?;
        return Ok(serde_json::to_value(ChoiJson::from_choi(&zero))?);
    }
    Ok(serde_json::to_value(ChoiJson::from_choi(&choi_from_kraus(k)?))?)
}

fn difference_json(diff: &DifferenceForm, d_in: usize, d_out: usize) -> anyhow::Result<Value> {
    Ok(json!({
        "plus": kraus_choi(&diff.plus, d_in, d_out)?,
        "minus": kraus_choi(&diff.minus, d_in, d_out)?,
    }))
}

fn fit_json(f: &FitResult) -> anyhow::Result<Value> {
    let (di, dout) = (f.choi.d_in(), f.choi.d_out());
    Ok(json!({
        "model": f.model,
        "residual": f.residual,
        "choi": ChoiJson::from_choi(&f.choi),
        "xi": f.xi,
        "difference": f.difference.as_ref().map(|d| difference_json(d, di, dout)).transpose()?,
    }))
}

fn parse_params(s: &str) -> anyhow::Result<Vec<(String, f64)>> {
    s.split(',')
        .filter(|kv| !kv.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("expected key=value, got {kv:?}"))?;
            Ok((k.trim().to_string(), v.trim().parse::<f64>().with_context(|| format!("value of {k}"))?))
        })
        .collect()
}

fn param(params: &[(String, f64)], key: &str) -> anyhow::Result<f64> {
    params
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| anyhow!("missing parameter {key}"))
}

fn parse_truth(spec: &str) -> anyhow::Result<Box<dyn MapEvaluator>> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match kind {
        "toy" => {
            let p = parse_params(rest)?;
            Box::new(toy_affine_form(param(&p, "a")?, param(&p, "theta")?)?)
        }
        "transpose" => Box::new(transpose_choi(2)),
        "identity" => Box::new(identity_choi(2)),
        "depolarizing" => Box::new(depolarizing_choi(2)),
        "tprime" => Box::new(tprime_choi(param(&parse_params(rest)?, "p")?)),
        "choi" => Box::new(read_choi(Path::new(rest))?),
        other => bail!("unknown truth {other:?}"),
    })
}

fn parse_scales(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [hi, lo, n] = parts[..] else {
        bail!("--scales expects hi:lo:n, got {s:?}");
    };
    Ok(geometric_scales(hi.parse()?, lo.parse()?, n.parse()?))
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Sweep { a, points, out } => {
            let rows = spectrum_sweep(a, &theta_grid(points))?;
            let mut csv = String::from("theta,lam1,lam2,lam3,lam4,xi_z\n");
            for r in rows {
                let ev: Vec<String> = r.eigenvalues.iter().map(|x| num(*x)).collect();
                csv += &format!("{},{},{}\n", num(r.theta), ev.join(","), num(r.xi_z));
            }
            emit(out.as_deref(), &csv)
        }
        Command::Access(AccessCmd::Test { choi, tol, out }) => {
            let d = read_choi(&choi)?;
            let r = linear_accessibility_test(&d, tol, &OptimizerConfig::default())?;
            let cert = if r.certificate.is_some() {
                Some(ChoiJson::from_choi(&l_of_xi(&d, &r.xi_star)?))
            } else {
                None
            };
            emit_json(
                out.as_deref(),
                &json!({
                    "status": r.status,
                    "xi_star": r.xi_star,
                    "lambda_min_star": r.lambda_min_star,
                    "iterations": r.iterations,
                    "converged": r.converged,
                    "certificate": cert,
                }),
            )
        }
        Command::Access(AccessCmd::Threshold { family, lo, hi, tol, out }) => {
            if family != "tprime" {
                bail!("unknown family {family:?}; available: tprime");
            }
            let p = accessibility_threshold(|p| Ok(tprime_choi(p)), lo, hi, 1e-8, tol)?;
            emit_json(out.as_deref(), &json!({ "family": family, "p_star": p }))
        }
        Command::Perturb(PerturbCmd::Scan { config, scales, out }) => {
            let cfg: ModelConfig = read_json(&config)?;
            let scales = parse_scales(&scales)?;
            let mut model = WeakCouplingModel::random(&mut random::rng(cfg.seed), cfg.d_a, cfg.d_b, 0.0, 0.0)?;
            model.t = cfg.t;
            let rows = scaling_scan(&model, &scales)?;
            let mut csv = String::from("epsilon,eta,noncp,nonlin,shift,tau_positive\n");
            for r in &rows {
                let m = r.metrics;
                csv += &format!(
                    "{},{},{},{},{},{}\n",
                    num(r.epsilon),
                    num(r.eta),
                    num(m.noncp),
                    num(m.nonlin),
                    num(m.shift),
                    m.tau_positive
                );
            }
            let slope = scaling_exponent(&model, &scales)?;
            match out {
                Some(p) => {
                    emit(Some(&p), &csv)?;
                    emit_json(None, &json!({ "scaling": slope, "rows": rows.len() }))
                }
                None => emit(None, &csv),
            }
        }
        Command::Decouple { g, t, seed, out } => {
            let model = DecouplingModel::spin_echo(g, t);
            let mut rng = random::rng(seed);
            let mut worst = 0.0_f64;
            for _ in 0..20 {
                let rho = random::density(&mut rng, 2);
                let omega = random::density(&mut rng, 2);
                let back = decoupling_sequence(&model, &rho, &omega)?;
                worst = worst.max(trace_distance(&back, rho.matrix())?);
            }
            let (min_eig, note) = match recovery_map_choi(&model, &DensityMatrix::maximally_mixed(2)) {
                Ok(r) => (Some(r.min_eigenvalue), None),
                Err(noncp_core::Error::NotInvertible(msg)) => (None, Some(msg)),
                Err(e) => return Err(e.into()),
            };
            emit_json(
                out.as_deref(),
                &json!({
                    "g": g,
                    "t": t,
                    "recovery_error": worst,
                    "recovery_map_min_eig": min_eig,
                    "note": note,
                }),
            )
        }
        Command::Assist(AssistCmd::Demo { out }) => {
            let ch = dephasing_copy_demo();
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let plus = DensityMatrix::pure(&[cr(h), cr(h)])?;
            let minus = DensityMatrix::pure(&[cr(h), cr(-h)])?;
            let g = distinguishability_gain(&ch, &plus, &minus)?;
            emit_json(out.as_deref(), &json!({ "inputs": ["+", "-"], "assisted": g.assisted, "unassisted": g.unassisted, "gain": g.gain }))
        }
        Command::Tomo(TomoCmd::Run { truth, shots, seed, tol, out }) => {
            let map = parse_truth(&truth)?;
            let inputs = tomographic_inputs(map.d_in())?;
            let rec = simulate_tomography(map.as_ref(), &inputs, shots, seed)?;
            let ranked = template_comparison(&rec, DEFAULT_TIE_TOL, tol)?;
            let fits: Vec<Value> = ranked.iter().map(fit_json).collect::<anyhow::Result<_>>()?;
            emit_json(
                out.as_deref(),
                &json!({ "truth": truth, "record": rec.to_json(), "fits": fits }),
            )
        }
        Command::Channel(ChannelCmd::Props(a)) => {
            let d = read_choi(&a.choi)?;
            let p = channel_properties(&d, a.tol);
            emit_json(
                a.out.as_deref(),
                &json!({
                    "trace_preserving": p.trace_preserving,
                    "unital": p.unital,
                    "cp": p.cp,
                    "min_eigenvalue": p.min_eigenvalue,
                    "eigenvalues": d.eigenvalues(),
                }),
            )
        }
        Command::Channel(ChannelCmd::Split(a)) => {
            let d = read_choi(&a.choi)?;
            let diff = difference_form(&d);
            emit_json(a.out.as_deref(), &difference_json(&diff, d.d_in(), d.d_out())?)
        }
        Command::Channel(ChannelCmd::Assign { assignment, rho, out }) => {
            let spec = read_json::<AssignmentJson>(&assignment)?.to_spec()?;
            let rho = DensityMatrix::new(read_json::<MatrixJson>(&rho)?.to_matrix()?)?;
            let s = apply_assignment(&spec, &rho)?;
            emit_json(
                out.as_deref(),
                &json!({
                    "tau": MatrixJson::from_matrix(&s.tau),
                    "min_eigenvalue": s.min_eigenvalue,
                    "positive": s.positive,
                }),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let contract = e
                .chain()
                .any(|c| c.downcast_ref::<noncp_core::Error>().is_some_and(|x| x.is_contract_violation()));
            ExitCode::from(if contract { 2 } else { 1 })
        }
    }
}
