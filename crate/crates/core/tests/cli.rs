//! End-to-end runs of the `ddetect` binary: outputs, determinism, exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use double_disorder::ModelSpec;
use tempfile::TempDir;

fn ddetect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddetect"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_model(dir: &TempDir, name: &str, spec: &ModelSpec) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, spec.to_json_pretty()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_is_deterministic_and_has_requested_rows() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", &ModelSpec::tiny());
    let args = ["simulate", "--model", s(&model), "--count", "3", "--seed", "7"];
    let a = stdout(&ddetect(&args));
    let b = stdout(&ddetect(&args));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 4);
    let c = stdout(&ddetect(&[
        "simulate",
        "--model",
        s(&model),
        "--count",
        "3",
        "--seed",
        "8",
    ]));
    assert_ne!(a, c);
}

#[test]
fn malformed_kernel_names_the_field() {
    let dir = TempDir::new().unwrap();
    let text = ModelSpec::tiny().to_json_pretty().replacen("0.9", "\"oops\"", 1);
    let model = dir.path().join("bad.json");
    std::fs::write(&model, text).unwrap();
    let out = ddetect(&["simulate", "--model", s(&model)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kernel_pre[0][0]"), "{err}");
}

#[test]
fn unknown_model_file_is_an_io_error() {
    let out = ddetect(&["verify", "--model", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_model_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let mut spec = ModelSpec::tiny();
    spec.kernel_pre[0] = vec![0.6, 0.6];
    let model = write_model(&dir, "m.json", &spec);
    let out = ddetect(&["verify", "--model", s(&model)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_without_contraction_fails() {
    let dir = TempDir::new().unwrap();
    let mut spec = ModelSpec::tiny();
    spec.p2 = 1.0;
    spec.q2 = 0.0;
    let model = write_model(&dir, "m.json", &spec);
    let out = ddetect(&["solve", "--model", s(&model)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_depth_guard() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", &ModelSpec::tiny());
    let out = ddetect(&["verify", "--model", s(&model), "--depth", "25"]);
    assert_eq!(out.status.code(), Some(1));
    let ok = stdout(&ddetect(&["verify", "--model", s(&model), "--depth", "4"]));
    assert!(ok.contains("\"passed\": true"), "{ok}");
}

#[test]
fn detect_with_missing_policy_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", &ModelSpec::tiny());
    let trajs = dir.path().join("t.csv");
    let out = ddetect(&["simulate", "--model", s(&model), "--out", s(&trajs)]);
    assert!(out.status.success());
    let missing = dir.path().join("nope.json");
    let out = ddetect(&[
        "detect",
        "--model",
        s(&model),
        "--policy",
        s(&missing),
        "--trajectories",
        s(&trajs),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn certain_immediate_changes_are_detected_at_origin() {
    let dir = TempDir::new().unwrap();
    let mut spec = ModelSpec::tiny();
    spec.pi = 1.0;
    spec.rho = 1.0;
    let model = write_model(&dir, "m.json", &spec);
    let policy = dir.path().join("p.json");
    let trajs = dir.path().join("t.csv");
    assert!(ddetect(&["solve", "--model", s(&model), "--out", s(&policy)])
        .status
        .success());
    assert!(ddetect(&[
        "simulate",
        "--model",
        s(&model),
        "--count",
        "50",
        "--horizon",
        "6",
        "--out",
        s(&trajs),
    ])
    .status
    .success());
    let csv = stdout(&ddetect(&[
        "detect",
        "--model",
        s(&model),
        "--policy",
        s(&policy),
        "--trajectories",
        s(&trajs),
    ]));
    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("seed,theta1,theta2,tau,sigma,hit1,hit2"));
    let mut count = 0;
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(&f[1..], ["0", "0", "0", "0", "true", "true"], "{row}");
        count += 1;
    }
    assert_eq!(count, 50);

    let report = stdout(&ddetect(&[
        "evaluate",
        "--model",
        s(&model),
        "--policy",
        s(&policy),
        "--runs",
        "200",
    ]));
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["detection_prob_estimate"], 1.0);
    assert_eq!(v["wilson_ci_95"][1], 1.0);
}

#[test]
fn evaluate_rejects_too_few_runs() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", &ModelSpec::tiny());
    let policy = dir.path().join("p.json");
    assert!(ddetect(&["solve", "--model", s(&model), "--out", s(&policy)])
        .status
        .success());
    let out = ddetect(&["evaluate", "--model", s(&model), "--policy", s(&policy), "--runs", "50"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn policy_for_another_model_is_rejected() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "m.json", &ModelSpec::tiny());
    let mut other = ModelSpec::tiny();
    other.p1 = 0.6;
    other.q1 = 0.4;
    let other = write_model(&dir, "o.json", &other);
    let policy = dir.path().join("p.json");
    assert!(ddetect(&["solve", "--model", s(&other), "--out", s(&policy)])
        .status
        .success());
    let out = ddetect(&[
        "evaluate",
        "--model",
        s(&model),
        "--policy",
        s(&policy),
        "--runs",
        "100",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
