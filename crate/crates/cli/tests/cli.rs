use std::path::Path;
use std::process::{Command, Output};

fn locomode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locomode")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn run_fsm_on_synthetic_trial() {
    let dir = tempfile::tempdir().unwrap();
    let trial = dir.path().join("trial.csv");
    let log = dir.path().join("log.csv");
    assert_eq!(locomode(&["synth", "--out", p(&trial)]).status.code(), Some(0));
    let out = locomode(&["run-fsm", "--in", p(&trial), "--out", p(&log)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,from,to,icf,threshold");
    assert_eq!(lines.len(), 7);
}

#[test]
fn evaluate_reports_full_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let trial = dir.path().join("s1.csv");
    let report = dir.path().join("report.json");
    locomode(&["synth", "--out", p(&trial)]);
    let out = locomode(&["evaluate", "--in", p(&trial), "--out", p(&report)]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for tr in ["W-S", "S-W", "W-SA", "SA-W", "W-SD", "SD-W"] {
        assert_eq!(v["pooled"][tr]["accuracy"], 100.0, "{tr}");
    }
}

#[test]
fn tune_bo_respects_budget() {
    let dir = tempfile::tempdir().unwrap();
    let result = dir.path().join("bo.json");
    let out = locomode(&["tune", "bo", "--pair", "wsd", "--budget", "30", "--seed", "7", "--out", p(&result)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    let n = v["evaluations"].as_u64().unwrap();
    assert!(n <= 30);
    assert_eq!(v["trace"].as_array().unwrap().len() as u64, n);
}

#[test]
fn tune_bo_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = locomode(&["tune", "bo", "--pair", "ws", "--budget", "8", "--seed", "11", "--out", p(out)]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn missing_input_is_a_data_error() {
    let out = locomode(&["run-fsm", "--in", "/nonexistent/trial.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_csv_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let trial = dir.path().join("bad.csv");
    std::fs::write(&trial, "t,theta_th,grf\n0,1,0\n0.01,abc,0\n").unwrap();
    let out = locomode(&["run-fsm", "--in", p(&trial)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(locomode(&["evaluate", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(locomode(&["tune", "bo"]).status.code(), Some(1));
    assert_eq!(locomode(&["--version"]).status.code(), Some(0));
}

#[test]
fn export_plots_without_artifacts_fails() {
    let results = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = locomode(&["export-plots", "--results", p(results.path()), "--out", p(out.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_plots_merges_bo_and_grid() {
    let results = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let r = results.path();
    let o = locomode(&["tune", "bo", "--pair", "wsa", "--budget", "10", "--seed", "2", "--out", p(&r.join("bo_wsa.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let o = locomode(&["tune", "grid", "--pair", "wsa", "--out", p(&r.join("grid_wsa.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let trial = r.join("trial.csv");
    locomode(&["synth", "--out", p(&trial)]);
    locomode(&["evaluate", "--in", p(&trial), "--out", p(&r.join("report.json"))]);

    let o = locomode(&["export-plots", "--results", p(r), "--out", p(out.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "comparison_wsa.json",
        "bo_wsa_trace.csv",
        "bo_wsa_acquisition.csv",
        "grid_wsa_lattice.csv",
        "evaluation_counts.csv",
        "accuracy.csv",
    ] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
    let cmp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("comparison_wsa.json")).unwrap()).unwrap();
    assert_eq!(cmp["grid"]["evaluations"], 225);
    assert_eq!(cmp["bo"]["evaluations"], 10);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"pair": "ws", "budget": 6, "seed": 3}"#).unwrap();
    let out = dir.path().join("r.json");
    let o = locomode(&["--config", p(&cfg), "--seed", "5", "tune", "bo", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["seed"], 5);
    assert_eq!(v["budget"], 6);
    assert_eq!(v["pair"], "ws");
}
