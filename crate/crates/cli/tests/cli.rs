use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use partreg_core::io::{load_json, RunReport, METRICS_FILE, REGISTERED_FILE, REPORT_FILE, TARGET_FILE};
use partreg_core::metrics::MetricsBundle;

fn partreg(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_partreg"));
    cmd.args(args).env_remove("PARTREG_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_register_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scen");
    let run = tmp.path().join("run");
    ok(partreg(&["generate", "e1", "lander", "--seed", "3", "--out", s(&scen)], &[]));
    ok(partreg(&["register", "--scenario", s(&scen), "--out", s(&run)], &[]));
    assert!(run.join(REPORT_FILE).exists() && run.join(REGISTERED_FILE).exists());
    let report: RunReport = load_json(&run.join(REPORT_FILE)).unwrap();
    assert_eq!(report.config.f_retention, 0.5);
    assert_eq!(report.config.d_max, 20.0);
    assert_eq!(report.config.n_min, 5);
    ok(partreg(&["evaluate", "--scenario", s(&scen), "--run", s(&run)], &[]));
    let metrics: MetricsBundle = load_json(&run.join(METRICS_FILE)).unwrap();
    assert_eq!(Some(metrics), report.metrics);
}

#[test]
fn seed_env_overrides_and_register_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scen");
    ok(partreg(&["generate", "e2", "robot", "--out", s(&scen)], &[("PARTREG_SEED", "8")]));
    let spec: serde_json::Value = load_json(&scen.join("scenario.json")).unwrap();
    assert_eq!(spec["seed"], 8);
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let run = tmp.path().join(name);
        ok(partreg(
            &["register", "--scenario", s(&scen), "--out", s(&run), "--ransac-iterations", "400"],
            &[("PARTREG_SEED", "21")],
        ));
        let report: RunReport = load_json(&run.join(REPORT_FILE)).unwrap();
        assert_eq!(report.config.seed, 21);
        assert_eq!(report.config.ransac_iterations, 400);
        assert_eq!(report.config.f_retention, 0.4);
        reports.push(serde_json::to_string(&report.without_timings()).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn preset_scenario_source_runs_in_memory() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    ok(partreg(&["register", "--preset", "e1", "--model", "robot", "--out", s(&run)], &[]));
    let report: RunReport = load_json(&run.join(REPORT_FILE)).unwrap();
    assert_eq!(report.scenario, "e1-robot");
}

#[test]
fn corrupted_cloud_fails_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scen");
    ok(partreg(&["generate", "e1", "robot", "--out", s(&scen)], &[]));
    let path = scen.join(TARGET_FILE);
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(str::to_string).collect();
    lines[12] = "0.5 0.5".into();
    fs::write(&path, lines.join("\n")).unwrap();
    let out = partreg(&["register", "--scenario", s(&scen), "--out", s(&tmp.path().join("run"))], &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 13"), "{err}");
}

#[test]
fn invalid_inputs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = partreg(&["generate", "e9", "lander", "--out", s(tmp.path())], &[]);
    assert!(!out.status.success());
    let scen = tmp.path().join("scen");
    ok(partreg(&["generate", "e1", "lander", "--out", s(&scen)], &[]));
    let out = partreg(&["register", "--scenario", s(&scen), "--out", s(&tmp.path().join("r")), "--f-retention", "1.5"], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("f_retention"));
    let out = partreg(&["register", "--out", s(&tmp.path().join("r"))], &[]);
    assert!(!out.status.success());
    let out = partreg(&["evaluate", "--scenario", s(&scen), "--run", s(&tmp.path().join("none"))], &[]);
    assert!(!out.status.success());
}
