use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ftrv_cli::{EXIT_CHECK, EXIT_OBJECTIVE, SUMMARY_HEADER};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn ftrv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftrv")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p5() -> String {
    fixture("p5.txt").display().to_string()
}

#[test]
fn synth_writes_artifacts_with_fixed_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().display().to_string();
    let p5 = p5();
    let args = [
        "synth", "--graph", &p5, "--agents", "2", "--memory", "2", "--steps", "40", "--seeds", "2", "--out", &out_dir,
    ];
    let out = ftrv(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["strategy.json", "report.json", "steps.csv", "summary.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }

    let mut summary = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let header: Vec<String> = summary.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, SUMMARY_HEADER);
    let rows: Vec<csv::StringRecord> = summary.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "coordinated");
    assert_eq!(&rows[0][1], "2");
    let et: f64 = rows[0][4].parse().unwrap();
    assert!(et >= 2.0 - 1e-9 && et.is_finite());

    let mut steps = csv::Reader::from_path(dir.path().join("steps.csv")).unwrap();
    assert_eq!(steps.headers().unwrap(), vec!["seed", "step", "value", "seconds"]);
    assert_eq!(steps.records().count(), 2 * 40);

    // the written strategy re-evaluates to the reported value
    let strat = dir.path().join("strategy.json").display().to_string();
    let out = ftrv(&["eval", &strat, "--graph", &p5]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let value = report["value"].as_f64().unwrap();
    assert!((value - et).abs() < 1e-5, "{value} vs {et}");
}

#[test]
fn invalid_objective_exits_with_objective_code() {
    let p5 = p5();
    for objective in ["max{ET(v,0) for v in", "max{ET(Z,0)}", "ET(A,7)"] {
        let out = ftrv(&["synth", "--graph", &p5, "--steps", "1", "--objective", objective]);
        assert_eq!(out.status.code(), Some(EXIT_OBJECTIVE as i32), "{objective}");
    }
}

#[test]
fn missing_graph_is_a_plain_error() {
    let out = ftrv(&["synth", "--graph", "/nonexistent/graph.txt", "--steps", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn eval_reproduces_fixture_values() {
    let out = ftrv(&["eval", &fixture("p5_c.json").display().to_string(), "--graph", &p5()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((report["value"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn oracle_on_p3() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("p3.txt");
    std::fs::write(&graph, "vertex A\nvertex B\nvertex C\nundirected A B\nundirected B C\n").unwrap();
    let out = ftrv(&["oracle", "--graph", &graph.display().to_string()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).trim().parse::<f64>().unwrap(), 3.0);
}

#[test]
fn gradcheck_passes_on_p5() {
    let out = ftrv(&["gradcheck", "--graph", &p5(), "--memory", "2", "--coords", "30"]);
    assert!(out.status.success(), "{}{}", stdout(&out), String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("max rel err"));
}

#[test]
fn simulate_agrees_on_fixture() {
    let out = ftrv(&[
        "simulate",
        &fixture("p5_c.json").display().to_string(),
        "--graph",
        &p5(),
        "--trials",
        "20000",
    ]);
    assert_ne!(out.status.code(), Some(EXIT_CHECK as i32));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_with_generator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    let config = r#"{
        "graph": {"path": 3},
        "mode": "coordinated",
        "n": 1,
        "memory": 2,
        "kappa": 0.0,
        "optimizer": {"steps": 30, "seeds": [0]}
    }"#;
    std::fs::write(&cfg, config).unwrap();
    let out_dir = dir.path().join("out").display().to_string();
    let out = ftrv(&["synth", "--config", &cfg.display().to_string(), "--out", &out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/summary.csv").is_file());

    std::fs::write(&cfg, r#"{"graph": {"path": 3}, "agents": 2}"#).unwrap();
    let out = ftrv(&["synth", "--config", &cfg.display().to_string()]);
    assert_eq!(out.status.code(), Some(1));
}
