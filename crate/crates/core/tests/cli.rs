//! End-to-end behaviour of the command-line tool.

use std::path::PathBuf;
use std::process::{Command, Output};

use conesq::harness::VerificationReport;

fn conesq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conesq")).args(args).output().expect("binary runs")
}

fn scenario_file(name: &str, body: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("conesq-cli-{}-{name}.json", std::process::id()));
    std::fs::write(&path, body).unwrap();
    path
}

fn reports(out: &Output) -> Vec<VerificationReport> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

fn repo_scenario(name: &str) -> String {
    format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn passing_suite_exits_zero_with_json_lines() {
    let out = conesq(&["verify", "lattice", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let rs = reports(&out);
    assert_eq!(rs.len(), 50);
    assert!(rs.iter().all(|r| r.pass && r.suite == "lattice" && r.seed == 4));
}

#[test]
fn failing_check_exits_one() {
    // a weak-testing constant far below the measured one must be reported as a failure
    let body = r#"{"set": {"type": "segment", "a": [0, 0], "b": [1, 0]},
                   "measure": {"type": "uniform", "mesh": 0.03125}, "params": {"c2": 0.01}}"#;
    let path = scenario_file("fail", body);
    let out = conesq(&["--scenario", path.to_str().unwrap(), "verify", "hypotheses"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(reports(&out).iter().any(|r| !r.pass));
}

#[test]
fn malformed_scenario_is_rejected() {
    let unknown = scenario_file("unknown", r#"{"set": {"type": "segment", "a": [0, 0], "b": [1, 0]}, "bogus": 1}"#);
    let out = conesq(&["--scenario", unknown.to_str().unwrap(), "verify"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let bad_value = scenario_file(
        "value",
        r#"{"set": {"type": "segment", "a": [0, 0], "b": [1, 0]},
            "measure": {"type": "uniform", "mesh": 0.1}, "params": {"rho": -1}}"#,
    );
    let out = conesq(&["--scenario", bad_value.to_str().unwrap(), "nets"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.rho"));

    let out = conesq(&["--scenario", "/nonexistent/scenario.json", "nets"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn unknown_suite_is_an_error() {
    let out = conesq(&["verify", "no-such-suite"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_suite_list_is_a_successful_no_op() {
    let body = r#"{"set": {"type": "segment", "a": [0, 0], "b": [1, 0]},
                   "measure": {"type": "uniform", "mesh": 0.1}, "suites": []}"#;
    let path = scenario_file("empty", body);
    let out = conesq(&["--scenario", path.to_str().unwrap(), "verify"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn shipped_scenarios_pass() {
    for name in ["segment.json", "circle-phase.json"] {
        let out = conesq(&["--scenario", &repo_scenario(name), "verify"]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stdout));
        assert!(!reports(&out).is_empty());
    }
}

#[test]
fn out_directory_receives_report_and_ladders() {
    let dir = std::env::temp_dir().join(format!("conesq-cli-out-{}", std::process::id()));
    let out = conesq(&["verify", "martingale", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.join("report.jsonl")).unwrap();
    assert_eq!(text.lines().count(), reports(&out).len());
    assert!(dir.join("matrix-norm.csv").exists());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn every_subcommand_runs() {
    for args in [
        &["nets"][..],
        &["lattice"],
        &["whitney"],
        &["czd"],
        &["sqfn", "--budget", "40"],
        &["suppress", "--budget", "40"],
        &["experiment", "stopping-sets"],
        &["experiment", "good-lambda", "--budget", "40"],
    ] {
        let out = conesq(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn reruns_are_reproducible() {
    let run = |seed: &str| -> Vec<VerificationReport> {
        reports(&conesq(&["verify", "czd", "--seed", seed]))
            .iter()
            .map(VerificationReport::without_runtime)
            .collect()
    };
    let a = run("11");
    assert!(!a.is_empty());
    assert_eq!(a, run("11"));
    assert_ne!(a, run("12"));
}
