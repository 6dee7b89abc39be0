use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qtomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtomo")).args(args).output().expect("spawn qtomo")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn protocol_tetrahedron_single_qubit() {
    let v = json_stdout(&qtomo(&["protocol", "tetrahedron", "1"]));
    assert_eq!(v["m"], 4);
    assert_eq!(v["q"], 4);
    assert_eq!(v["complete"], true);
    assert!((v["unity_i0"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(v["adequacy"][0]["dof"], 1);
    assert_eq!(v["adequacy"][1]["dof"], 0);
}

#[test]
fn protocol_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cube.json");
    assert!(qtomo(&["protocol", "cube", "2", "--export", path(&file)]).status.success());
    let text = std::fs::read_to_string(&file).unwrap();
    let p = qtomo_core::protocol::from_json(&text).unwrap();
    assert_eq!((p.rows(), p.dim()), (36, 4));
}

#[test]
fn bounds_examples() {
    let v = json_stdout(&qtomo(&["bounds", "1", "2"]));
    assert_eq!(v["optimal_min"], 2.25);
    assert_eq!(v["polyhedron_mixed_min"], 2.25);
    assert_eq!(v["ratio"], 1.0);
    let v = json_stdout(&qtomo(&["bounds", "2", "4"]));
    assert_eq!(v["optimal_min"], 18.75);
    assert_eq!(v["polyhedron_mixed_min"], 24.75);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(qtomo(&["bounds", "1", "3"]).status.code(), Some(2));
    assert_eq!(qtomo(&["protocol", "prism", "1"]).status.code(), Some(2));
    assert_eq!(qtomo(&["scan", "cube", "--resolution", "20"]).status.code(), Some(2));
    assert_eq!(qtomo(&["no-such-command"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"polyhedron": "cube", "bogus": 1}"#).unwrap();
    assert_eq!(qtomo(&["simulate", "--config", path(&cfg)]).status.code(), Some(2));
}

#[test]
fn scan_reports_octahedron_extremes() {
    let v = json_stdout(&qtomo(&["scan", "octahedron", "--resolution", "5"]));
    assert!((v["L_max"].as_f64().unwrap() - 1.125).abs() < 1e-6);
    assert!((v["L_min"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn simulate_then_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let truth = dir.path().join("truth.json");
    let out = qtomo(&[
        "simulate", "--polyhedron", "octahedron", "--qubits", "2", "--state", "pure-random", "--state-seed", "4",
        "--n", "1e6", "--seed", "9", "--out-csv", path(&counts), "--state-out", path(&truth),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_stdout(&qtomo(&[
        "reconstruct", "octahedron", "--qubits", "2", "--counts", path(&counts), "--truth", path(&truth),
    ]));
    assert_eq!(v["selected_rank"], 1);
    let f = v["result"]["fidelity_vs_truth"].as_f64().unwrap();
    assert!(f > 0.999, "fidelity {f}");

    let v = json_stdout(&qtomo(&["adequacy", "octahedron", "--qubits", "2", "--counts", path(&counts), "--rank", "1"]));
    assert_eq!(v["dof"], 57);
    assert_eq!(
        qtomo(&["adequacy", "octahedron", "--qubits", "2", "--counts", path(&counts), "--rank", "5"]).status.code(),
        Some(2)
    );
}

#[test]
fn simulate_is_seeded() {
    let args = ["simulate", "--polyhedron", "tetrahedron", "--state", "pure-random", "--n", "5000", "--seed", "3"];
    let a = qtomo(&args);
    let b = qtomo(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn mc_single_run_and_worker_independence() {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str, tag: &str, runs: &str| {
        let csv = dir.path().join(format!("{tag}.csv"));
        let json = dir.path().join(format!("{tag}.json"));
        let out = qtomo(&[
            "--workers", workers, "mc", "--polyhedron", "cube", "--state", "pure-random", "--n", "1e5", "--runs",
            runs, "--seed", "12", "--out-csv", path(&csv), "--out-json", path(&json),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (std::fs::read_to_string(csv).unwrap(), std::fs::read_to_string(json).unwrap())
    };
    let (single, _) = run("1", "single", "1");
    assert_eq!(single.lines().count(), 2);
    let (csv1, json1) = run("1", "w1", "40");
    let (csv3, json3) = run("3", "w3", "40");
    assert_eq!(csv1, csv3);
    assert_eq!(json1, json3);
    let v: Value = serde_json::from_str(&json1).unwrap();
    assert_eq!(v["failed"], 0);
    assert!(v["theoretical"]["L"].as_f64().unwrap() >= 1.0);
}

#[test]
fn losscoef_writes_coefficients_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d.csv");
    let samples = dir.path().join("s.csv");
    let v = json_stdout(&qtomo(&[
        "losscoef", "--polyhedron", "icosahedron", "--qubits", "2", "--state", "white-noise-mix", "--f", "1",
        "--n", "1e4", "--out-csv", path(&d), "--samples", "100", "--samples-out", path(&samples),
    ]));
    assert!((v["L"].as_f64().unwrap() - 24.75).abs() < 1e-6);
    assert_eq!(v["j_max"], 15);
    assert_eq!(std::fs::read_to_string(d).unwrap().lines().count(), 16);
    assert_eq!(std::fs::read_to_string(samples).unwrap().lines().count(), 101);
}
