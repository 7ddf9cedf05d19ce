use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn twoscale(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoscale"))
        .current_dir(dir)
        .env_remove("TWOSCALE_JOBS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn verdict(run: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(run.join("verdict.json")).unwrap()).unwrap()
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn check_reports_contraction_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"model": "linear_test_model", "study": "check"}"#);
    let o = twoscale(tmp.path(), &["check", "--config", &cfg, "--out", "run"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = verdict(&tmp.path().join("run"));
    assert_eq!(v["status"], "pass");
    assert!((v["summary"]["gate"]["contraction"]["m0"].as_f64().unwrap() - 0.25).abs() < 1e-15);

    let o = twoscale(tmp.path(), &["check", "--config", &cfg, "--out", "bad", "--override", "model_params.feedback=-0.8"]);
    assert_eq!(code(&o), 1);
    let v = verdict(&tmp.path().join("bad"));
    assert!((v["summary"]["gate"]["contraction"]["m0"].as_f64().unwrap() - 0.64).abs() < 1e-15);
}

#[test]
fn converge_refuses_failing_model() {
    let tmp = tempfile::tempdir().unwrap();
    let o = twoscale(tmp.path(), &["converge", "--override", "model_params.feedback=-0.8", "--out", "r"]);
    assert_eq!(code(&o), 2);
    assert_eq!(verdict(&tmp.path().join("r"))["status"], "refused");
    assert!(!tmp.path().join("r/converge.csv").exists());
}

#[test]
fn config_errors_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"model": "linear_test_model", "fooo": 3}"#);
    let o = twoscale(tmp.path(), &["check", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fooo"));

    let cfg = write_config(tmp.path(), r#"{"study": "gap"}"#);
    assert_eq!(code(&twoscale(tmp.path(), &["check", "--config", &cfg])), 2);
    assert_eq!(code(&twoscale(tmp.path(), &["check", "--override", "basis.n"])), 2);
    assert_eq!(code(&twoscale(tmp.path(), &["check", "--config", "missing.json"])), 2);
    assert_eq!(code(&twoscale(tmp.path(), &["frobnicate"])), 2);
    assert_eq!(code(&twoscale(tmp.path(), &["check", "--jobs", "0"])), 2);
    assert!(!tmp.path().join("runs").exists() || fs::read_dir(tmp.path().join("runs")).unwrap().count() == 0);
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["simulate", "--seed", "7", "--override", "basis.n=8", "--out", out];
    assert_eq!(code(&twoscale(tmp.path(), &args("a"))), 0);
    assert_eq!(code(&twoscale(tmp.path(), &args("b"))), 0);
    for f in ["trajectory.csv", "verdict.json"] {
        assert_eq!(digest(&tmp.path().join("a").join(f)), digest(&tmp.path().join("b").join(f)), "{f}");
    }
    let a = fs::read_to_string(tmp.path().join("a/config.json")).unwrap();
    let b = fs::read_to_string(tmp.path().join("b/config.json")).unwrap();
    assert_eq!(a.replace("\"a\"", "\"b\""), b);
    assert_eq!(code(&twoscale(tmp.path(), &["simulate", "--seed", "8", "--override", "basis.n=8", "--out", "c"])), 0);
    assert_ne!(digest(&tmp.path().join("a/trajectory.csv")), digest(&tmp.path().join("c/trajectory.csv")));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"basis": {"n": 4}, "integrator": {"t_end": 0.2}, "params": {"replicas": 8, "eps_list": [0.1, 0.05]}}"#,
    );
    let one = twoscale(tmp.path(), &["remainder", "--config", &cfg, "--jobs", "1", "--out", "j1"]);
    assert!(code(&one) <= 1, "{}", String::from_utf8_lossy(&one.stderr));
    let many = Command::new(env!("CARGO_BIN_EXE_twoscale"))
        .current_dir(tmp.path())
        .env("TWOSCALE_JOBS", "4")
        .args(["remainder", "--config", &cfg, "--out", "j4"])
        .output()
        .unwrap();
    assert_eq!(code(&one), code(&many));
    assert_eq!(digest(&tmp.path().join("j1/remainder.csv")), digest(&tmp.path().join("j4/remainder.csv")));
    let timing: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("j4/timing.json")).unwrap()).unwrap();
    assert_eq!(timing["threads"], 4);
}

#[test]
fn study_writes_only_inside_its_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = twoscale(tmp.path(), &["check", "--out", "nested/run"]);
    assert_eq!(code(&o), 0);
    let top: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(top, vec!["nested"]);
    let mut files: Vec<String> = fs::read_dir(tmp.path().join("nested/run"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(files, ["check.csv", "config.json", "timing.json", "verdict.json"]);
}

#[test]
fn canonical_config_is_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = twoscale(tmp.path(), &["check", "--override", "basis.n=6", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let echoed = tmp.path().join("runs/check/config.json");
    let v: Value = serde_json::from_str(&fs::read_to_string(&echoed).unwrap()).unwrap();
    assert_eq!(v["basis"]["n"], 6);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["study"], "check");
    assert_eq!(v["integrator"]["dt"], "eps/10");
    let again = twoscale(tmp.path(), &["check", "--config", echoed.to_str().unwrap(), "--out", "second"]);
    assert_eq!(code(&again), 0);
    let second = fs::read_to_string(tmp.path().join("second/config.json")).unwrap();
    let first = fs::read_to_string(&echoed).unwrap();
    assert_eq!(first.replace("runs/check", "second"), second);
}
