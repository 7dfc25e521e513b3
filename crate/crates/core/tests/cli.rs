use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(out: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_singular-parabolic"));
    cmd.env_remove("SINGPAR_CONFIG")
        .env_remove("SINGPAR_SEED")
        .env_remove("SINGPAR_OUT")
        .env("SINGPAR_THREADS", "1")
        .arg("--out")
        .arg(out);
    if let Some(text) = config {
        let path = out.with_extension("json");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.args(args).output().unwrap()
}

const SCALAR: &str = r#"{"command": "semigroup-check", "operator": {"dim": 1, "re": [[-1.0]]}, "T": 1.0}"#;

#[test]
fn scalar_semigroup_check_passes_and_writes_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&out, &["semigroup-check"], Some(SCALAR));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let status: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(status["pass"], Value::Bool(true));

    let mut rdr = csv::Reader::from_path(out.join("semigroup-check/semigroup.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert!(headers.iter().all(|h| h.contains('[') && h.ends_with(']')), "{headers:?}");
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let t: f64 = rec[0].parse().unwrap();
        let e: f64 = rec[1].parse().unwrap();
        assert!((e - (-t).exp()).abs() <= 1e-12, "t = {t}: {e}");
        rows += 1;
    }
    assert!(rows > 10);

    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("semigroup-check/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["operator"]["re"][0][0], serde_json::json!(-1.0));
    assert_eq!(report["config"]["command"], "semigroup-check");
    assert!(report["config"]["tolerances"]["identity_residual"].is_number());
}

#[test]
fn critical_power_family_fails_hypotheses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"family": {"kind": "power", "A": {"dim": 1, "re": [[-1.0]]}, "beta": 1.0, "T": 1.0}}"#;
    let o = run(&dir.path().join("out"), &["hypo-check"], Some(cfg));
    assert_eq!(o.status.code(), Some(3));
    let status: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(status["pass"], Value::Bool(false));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"operator": {"dim": 1, "re": [[-1.0]]}, "bogus": 1}"#,
        r#"{"command": "wedge", "operator": {"dim": 1, "re": [[-1.0]]}}"#,
        r#"{"tolerances": {"not_a_tolerance": 1.0}}"#,
        r#"{"operator": {"dim": 2, "re": [[-1.0]]}}"#,
        "not json",
    ];
    for (k, cfg) in cases.iter().enumerate() {
        let o = run(&dir.path().join(format!("out{k}")), &["semigroup-check"], Some(cfg));
        assert_eq!(o.status.code(), Some(2), "case {k}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn report_without_runs_is_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&dir.path().join("empty"), &["report"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing artifacts"));
}

#[test]
fn partial_report_marks_missing_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&out, &["semigroup-check"], Some(SCALAR)).status.code(), Some(0));
    let o = run(&out, &["report"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("report/summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let status = |name: &str| rows.iter().find(|r| &r[0] == name).map(|r| r[2].to_string()).unwrap();
    assert_eq!(status("analytic-semigroup"), "pass");
    assert_eq!(status("integral-identity"), "pass");
    assert_eq!(status("wedge"), "not run");
    assert_eq!(status("evolution-operator"), "not run");
    assert!(out.join("report/summary.json").exists());
}

#[test]
fn seeded_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&a, &["--seed", "5", "hypo-check"], None).status.code(), Some(0));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_singular-parabolic"));
    let o = cmd
        .env_remove("SINGPAR_CONFIG")
        .env("SINGPAR_SEED", "5")
        .env("SINGPAR_OUT", &b)
        .env("SINGPAR_THREADS", "1")
        .arg("hypo-check")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    for file in ["samples.csv", "hypotheses.json"] {
        let x = fs::read(a.join("hypo-check").join(file)).unwrap();
        let y = fs::read(b.join("hypo-check").join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
}
