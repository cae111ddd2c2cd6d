use std::path::Path;
use std::process::{Command, Output};

use noncp_core::channel::transpose_choi;
use noncp_core::fano::AssignmentSpec;
use noncp_core::json::{ChoiJson, MatrixJson};
use noncp_core::linalg::{identity, max_abs};
use serde_json::Value;

fn noncp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noncp")).args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_json(path: &Path, v: &impl serde::Serialize) {
    std::fs::write(path, serde_json::to_string(v).unwrap()).unwrap();
}

#[test]
fn sweep_csv_shape() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spectrum.csv");
    let out = noncp(&["sweep", "--a", "0.2", "--points", "201", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "theta,lam1,lam2,lam3,lam4,xi_z");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 201);
    assert!(rows.iter().all(|r| r.len() == 6));
    assert!(rows.iter().any(|r| r[1] < 0.0));
    for r in &rows {
        assert!(r[1] <= r[2] && r[2] <= r[3] && r[3] <= r[4]);
        assert!((r[1] + r[2] + r[3] + r[4] - 2.0).abs() < 1e-12);
    }
}

#[test]
fn threshold_for_tprime() {
    let v = json_of(&noncp(&["access", "threshold", "--family", "tprime"]));
    let p = v["p_star"].as_f64().unwrap();
    assert!((p - 2.0 / 3.0).abs() < 1e-6, "{p}");
}

#[test]
fn access_test_reports_transpose_as_not_accessible() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    write_json(&path, &ChoiJson::from_choi(&transpose_choi(2)));
    let v = json_of(&noncp(&["access", "test", "--choi", path.to_str().unwrap()]));
    assert_eq!(v["status"], "not-accessible");
    assert!((v["lambda_min_star"].as_f64().unwrap() + 1.0).abs() < 1e-6);
    assert!(v["certificate"].is_null());
    assert_eq!(v["xi_star"].as_array().unwrap().len(), 3);
}

#[test]
fn contract_violations_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let not_tp = identity(4);
    write_json(&path, &ChoiJson { d_in: 2, d_out: 2, matrix: MatrixJson::from_matrix(&not_tp) });
    let out = noncp(&["access", "test", "--choi", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let spec = dir.path().join("spec.json");
    write_json(&spec, &AssignmentSpec::toy(0.1).to_json());
    let rho = dir.path().join("rho.json");
    write_json(&rho, &MatrixJson::from_matrix(&identity(2)));
    let out = noncp(&["channel", "assign", "--assignment", spec.to_str().unwrap(), "--rho", rho.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(noncp(&["sweep", "--bogus"]).status.code(), Some(1));
    assert_eq!(noncp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(noncp(&[]).status.code(), Some(1));
    assert_eq!(noncp(&["tomo", "run", "--truth", "nothing"]).status.code(), Some(1));
    assert_eq!(noncp(&["access", "test", "--choi", "/nonexistent/choi.json"]).status.code(), Some(1));
    assert_eq!(noncp(&["--help"]).status.code(), Some(0));
}

#[test]
fn decouple_report() {
    let v = json_of(&noncp(&["decouple", "--g", "1", "--t", "0.7"]));
    assert!(v["recovery_error"].as_f64().unwrap() < 1e-12);
    assert!(v["recovery_map_min_eig"].as_f64().unwrap() < 0.0);
    let v = json_of(&noncp(&["decouple", "--g", "1", "--t", &std::f64::consts::FRAC_PI_4.to_string()]));
    assert!(v["recovery_map_min_eig"].is_null());
    assert!(v["note"].is_string());
}

#[test]
fn assist_demo_report() {
    let v = json_of(&noncp(&["assist", "demo"]));
    assert!((v["assisted"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!(v["unassisted"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn channel_props_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    write_json(&path, &ChoiJson::from_choi(&transpose_choi(2)));
    let v = json_of(&noncp(&["channel", "props", "--choi", path.to_str().unwrap()]));
    assert_eq!(v["trace_preserving"], true);
    assert_eq!(v["unital"], true);
    assert_eq!(v["cp"], false);
    assert!((v["min_eigenvalue"].as_f64().unwrap() + 1.0).abs() < 1e-12);

    let v = json_of(&noncp(&["channel", "split", "--choi", path.to_str().unwrap()]));
    let plus: ChoiJson = serde_json::from_value(v["plus"].clone()).unwrap();
    let minus: ChoiJson = serde_json::from_value(v["minus"].clone()).unwrap();
    let diff = plus.to_choi().unwrap().matrix() - minus.to_choi().unwrap().matrix();
    assert!(max_abs(&(diff - transpose_choi(2).matrix())) < 1e-12);
    assert!(plus.to_choi().unwrap().min_eigenvalue() >= -1e-12);
    assert!(minus.to_choi().unwrap().min_eigenvalue() >= -1e-12);
}

#[test]
fn channel_assign_toy() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write_json(&spec, &AssignmentSpec::toy(0.1).to_json());
    let rho = dir.path().join("rho.json");
    write_json(&rho, &MatrixJson::from_matrix(&identity(2).scale(0.5)));
    let v = json_of(&noncp(&["channel", "assign", "--assignment", spec.to_str().unwrap(), "--rho", rho.to_str().unwrap()]));
    let tau: MatrixJson = serde_json::from_value(v["tau"].clone()).unwrap();
    assert_eq!(tau.dims, [4, 4]);
    assert_eq!(v["positive"], true);
    // ¼(1 + 0.1 Σσσ): singlet 0.175, triplet 0.275
    assert!((v["min_eigenvalue"].as_f64().unwrap() - 0.175).abs() < 1e-12);
}

#[test]
fn tomo_run_is_deterministic_and_ranks_affine_first() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let out = noncp(&["tomo", "run", "--truth", "toy:a=0.2,theta=0.26", "--shots", "2000", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ta, tb) = (std::fs::read_to_string(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
    assert_eq!(ta, tb);
    let v: Value = serde_json::from_str(&ta).unwrap();
    assert_eq!(v["record"]["shots"], 2000);
    assert_eq!(v["record"]["inputs"].as_array().unwrap().len(), 4);
    assert_eq!(v["fits"].as_array().unwrap().len(), 3);

    let v = json_of(&noncp(&["tomo", "run", "--truth", "toy:a=0.2,theta=0.26"]));
    assert_eq!(v["fits"][0]["model"], "affine-with-shift");
    assert_eq!(v["fits"][0]["xi"].as_array().unwrap().len(), 3);
    assert!(v["record"]["shots"].is_null());
    let v = json_of(&noncp(&["tomo", "run", "--truth", "transpose"]));
    assert_eq!(v["fits"][0]["model"], "linear-unconstrained");
    assert!(v["fits"][0]["difference"]["plus"].is_object());
}

#[test]
fn perturb_scan_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("model.json");
    std::fs::write(&cfg, r#"{"d_a":2,"d_b":2,"seed":36}"#).unwrap();
    let csv = dir.path().join("scan.csv");
    let v = json_of(&noncp(&["perturb", "scan", "--config", cfg.to_str().unwrap(), "--scales", "1e-1:1e-3:8", "--out", csv.to_str().unwrap()]));
    let slope = &v["scaling"];
    if slope["kind"] == "slope" {
        let s = slope["value"].as_f64().unwrap();
        assert!((1.8..=2.2).contains(&s), "{s}");
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epsilon,eta,noncp,nonlin,shift,tau_positive");
    assert_eq!(lines.len(), 9);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 6);
        assert!(f[..5].iter().all(|x| x.parse::<f64>().is_ok()));
    }
    std::fs::write(&cfg, r#"{"seed":1,"colour":"red"}"#).unwrap();
    assert_eq!(noncp(&["perturb", "scan", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}
