mod common;

use std::process::{Command, Output};

use common::case_path;

fn sdpopf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdpopf")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn case(name: &str) -> String {
    case_path(name).to_string_lossy().into_owned()
}

#[test]
fn solve_prints_summary() {
    let o = sdpopf(&["solve", &case("case1bus.json")]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "optimal");
    assert!((v["objective"].as_f64().unwrap() - 5.0).abs() < 1e-6);
}

#[test]
fn missing_file_is_exit_1() {
    let o = sdpopf(&["solve", "/nonexistent/case.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn bad_tolerance_is_exit_1() {
    let o = sdpopf(&["solve", &case("case1bus.json"), "--gap-tol", "-1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn infeasible_case_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.json");
    std::fs::write(
        &path,
        r#"{"base_mva": 100, "buses": [
            {"id": 1, "pd": 0, "qd": 0, "vmin": 0.95, "vmax": 1.05},
            {"id": 2, "pd": 150, "qd": 10, "vmin": 0.95, "vmax": 1.05}],
          "branches": [{"from": 1, "to": 2, "r": 0.01, "x": 0.05}],
          "generators": [{"bus": 1, "pmin": 0, "pmax": 100, "qmin": -50, "qmax": 50, "c1": 10, "c0": 0}]}"#,
    )
    .unwrap();
    let o = sdpopf(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}

#[test]
fn certify_14c_row_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("14c.json");
    let o = sdpopf(&["certify", &case("case14c.json"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "inexact certified");
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    let cells: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(&cells[2..7], &["2", "yes", "yes", "18", "12"], "{row}");

    let o = sdpopf(&["report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("inexact_certified"));
}

#[test]
fn sweep_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdpopf(&[
        "sweep",
        &case("micro.json"),
        "--buses",
        "2",
        "--range",
        "5:15",
        "--points",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["records"], 4);
    assert_eq!(summary["invariant_violations"], 0);
    assert!(dir.path().join("section_pd_2_qd_2.csv").exists());
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"max_iters": 1}"#).unwrap();
    let o = sdpopf(&["solve", &case("case14c.json"), "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    std::fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    let o = sdpopf(&["solve", &case("case1bus.json"), "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
