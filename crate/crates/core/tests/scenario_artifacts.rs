use std::fs;
use std::path::{Path, PathBuf};

use gsteer::scenario::*;
use serde_json::Value;

const LOCAL: &str = r#"{
  "schema": 1,
  "pipeline": "local",
  "model": {"kind": "dirichlet-heat", "n_modes": 8},
  "control": {"initial_state": [1.0, 7.0710678118654752e-4, 7.0710678118654752e-4]}
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(text: &str, pipeline: Option<Pipeline>) -> (tempfile::TempDir, ScenarioOutcome) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scenario.json", text);
    let out = dir.path().join("out");
    let outcome = run_scenario(&cfg, pipeline, Some(&out), None);
    (dir, outcome)
}

fn report(dir: &tempfile::TempDir) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap()
}

#[test]
fn local_run_artifacts() {
    let (dir, outcome) = run(LOCAL, None);
    assert_eq!(outcome.exit_code, EXIT_OK);
    assert_eq!(outcome.status, "converged");
    assert_eq!(outcome.written.len(), 2);
    let doc = report(&dir);
    for key in ["config_echo", "constants", "stages", "checks", "final", "status"] {
        assert!(doc.get(key).is_some(), "{key}");
    }
    let a = outcome.artifacts.unwrap();
    // norms survive the JSON round trip exactly
    assert_eq!(doc["final"]["final_deviation"], a.report["final"]["final_deviation"]);
    let stages = doc["stages"].as_array().unwrap();
    assert!(!stages.is_empty() && stages.len() <= 8);
    for (i, s) in stages.iter().enumerate() {
        assert_eq!(s["stage"].as_u64().unwrap() as usize, i + 1);
        assert!(s["gate"].as_f64().unwrap() <= 1.0);
    }

    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,p,norm_dev,x_1,x_2,x_3,x_4,x_5,x_6,x_7,x_8");
    let times: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(times[0], 0.0);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scenario.json", LOCAL);
    let out = dir.path().join("out");
    let read = |f: &str| fs::read(out.join(f)).unwrap();
    let o1 = run_scenario(&cfg, None, Some(&out), None);
    let first = (read("report.json"), read("trajectory.csv"));
    let o2 = run_scenario(&cfg, None, Some(&out), None);
    assert_eq!(o1.exit_code, o2.exit_code);
    assert!(first.0 == read("report.json"), "report.json differs");
    assert!(first.1 == read("trajectory.csv"), "trajectory.csv differs");
}

#[test]
fn theory_mode_failure_is_reported() {
    let text = r#"{
      "schema": 1,
      "model": {"kind": "dirichlet-heat", "n_modes": 8},
      "control": {"mode": "theory", "initial_state": [1.0, 1e-3]}
    }"#;
    let (dir, outcome) = run(text, Some(Pipeline::Local));
    assert_eq!(outcome.exit_code, EXIT_CONTROL);
    assert_eq!(outcome.status, "AdmissibilityViolated");
    let doc = report(&dir);
    let r_t = doc["constants"]["r_t"].as_f64().unwrap();
    assert!(r_t > 0.0);
    let err = &doc["final"]["error"];
    assert_eq!(err["kind"], "AdmissibilityViolated");
    assert_eq!(err["stage"], 1);
    assert!(err["limit"].as_f64().unwrap() < 1e-3);
    assert_eq!(doc["stages"].as_array().unwrap().len(), 0);
    // no stage ran: header and the initial sample only
    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    assert!(csv.lines().count() <= 2);
}

#[test]
fn config_errors_exit_2_without_artifacts() {
    let (dir, outcome) = run(r#"{"schema": 1, "model": {"kind": "dirichlet-heat"}, "extra": 1}"#, Some(Pipeline::Local));
    assert_eq!(outcome.exit_code, EXIT_CONFIG);
    assert!(outcome.artifacts.is_none());
    assert!(!dir.path().join("out/report.json").exists());

    let (_d, outcome) = run(r#"{"schema": 1, "model": {"kind": "dirichlet-heat"}}"#, None);
    assert_eq!(outcome.exit_code, EXIT_CONFIG);

    let missing = run_scenario(Path::new("/nonexistent/scenario.json"), Some(Pipeline::Local), None, None);
    assert_eq!(missing.exit_code, EXIT_CONFIG);

    let (_d, outcome) = run(
        r#"{"schema": 1, "model": {"kind": "custom", "path": "does-not-exist.json"}}"#,
        Some(Pipeline::Constants),
    );
    assert_eq!(outcome.exit_code, EXIT_CONFIG);
}

#[test]
fn analysis_pipelines_succeed() {
    let text = r#"{"schema": 1, "model": {"kind": "dirichlet-heat", "n_modes": 8}}"#;
    for p in [Pipeline::Constants, Pipeline::Hypotheses, Pipeline::VerifyIdentities] {
        let (dir, outcome) = run(text, Some(p));
        assert_eq!(outcome.exit_code, EXIT_OK, "{}: {}", p.name(), outcome.status);
        let doc = report(&dir);
        assert_eq!(doc["status"], outcome.status.as_str());
        let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
        assert_eq!(csv, "t,p,norm_dev,x_1,x_2,x_3,x_4,x_5,x_6,x_7,x_8\n");
    }
}

#[test]
fn seed_override_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", LOCAL);
    let out = dir.path().join("o");
    let outcome = run_scenario(&cfg, None, Some(&out), Some(42));
    assert_eq!(outcome.artifacts.unwrap().report["config_echo"]["control"]["seed"], 42);
}

#[test]
fn shipped_scenarios_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ScenarioConfig::load(&path).unwrap();
        cfg.validate().unwrap();
        assert!(cfg.pipeline.is_some(), "{}", path.display());
        count += 1;
    }
    assert!(count >= 4);
}
