//! End-to-end runs of the `grftail` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const HEADER: &str =
    "b,u,rho,approx,approx_laplace,mc_estimate,mc_se,is_estimate,is_se,count_mc_estimate,count_mc_se,warnings";

fn config(dir: &Path, half: f64, extra: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        format!(
            r#"{{
  "kernel": {{"name": "squared_exponential"}},
  "mean": {{"name": "quadratic", "c": 0.25}},
  "domain": [[-{half}, {half}]],
  "sigma": 1.0,
  "thresholds": {{"values": [3.0, 12.0, 30.0]}},
  "estimators": {{"seed": 3, "mc_n": 300, "is_n": 100, "count_n": 300, "importance_sampling": true, "count_mc": true}},
  "output": {{"dir": "{}", "name": "run"}}{extra}
}}"#,
            dir.join("out").display()
        ),
    )
    .unwrap();
    path
}

fn grftail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grftail")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let out = grftail(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn csv_header_is_stable() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 2.0, "");
    let path = run_ok(&["compare", "--config", cfg.to_str().unwrap()]);
    let csv = std::fs::read_to_string(path.trim()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.split(',').count() == 12));
    assert!(rows[0].ends_with("no_root"), "{}", rows[0]);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 2.0, "");
    let cfg = cfg.to_str().unwrap();
    for cmd in ["approx", "mc", "is", "compare"] {
        let first = std::fs::read(run_ok(&[cmd, "--config", cfg]).trim()).unwrap();
        let second = std::fs::read(run_ok(&[cmd, "--config", cfg]).trim()).unwrap();
        assert_eq!(first, second, "{cmd}");
    }
}

#[test]
fn seed_override_changes_monte_carlo_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 2.0, "");
    let cfg = cfg.to_str().unwrap();
    let a = std::fs::read_to_string(run_ok(&["mc", "--config", cfg]).trim()).unwrap();
    let b = std::fs::read_to_string(run_ok(&["mc", "--config", cfg, "--seed", "4"]).trim()).unwrap();
    assert_ne!(a, b);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"kernel\": {\"name\": \"squared_exponential\"},\n  \"sigma\": \"one\"\n}\n").unwrap();
    let out = grftail(&["approx", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let out = grftail(&["approx"]);
    assert_eq!(out.status.code(), Some(2));

    let out = grftail(&["approx", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pvalue_below_regime_without_monte_carlo_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("p.json");
    std::fs::write(
        &path,
        r#"{"kernel": {"name": "squared_exponential"}, "mean": {"name": "quadratic", "c": 0.25},
            "domain": [[-2, 2]], "sigma": 1.0, "thresholds": {"values": [3.0]},
            "estimators": {"seed": 1}, "observed_count": 3}"#,
    )
    .unwrap();
    let out = grftail(&["pvalue", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("observed count below asymptotic regime"));
}

#[test]
fn pvalue_reports_approximation_and_monte_carlo() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 2.0, r#", "observed_count": 20"#);
    let stdout = run_ok(&["pvalue", "--config", cfg.to_str().unwrap()]);
    assert!(stdout.contains("approximate p-value"));
    assert!(stdout.contains("Monte Carlo p-value"));
    assert!(stdout.contains("rho(T)"));
    let csv = std::fs::read_to_string(dir.path().join("out/run_pvalue.csv")).unwrap();
    assert!(csv.starts_with(HEADER));

    let stdout = run_ok(&["pvalue", "--config", cfg.to_str().unwrap(), "--observed", "0"]);
    assert!(stdout.contains("below asymptotic regime"));
}

#[test]
fn rho_reports_verdicts() {
    let dir = TempDir::new().unwrap();
    let small = run_ok(&["rho", "--config", config(dir.path(), 1.0, "").to_str().unwrap()]);
    assert!(small.contains("not recommended"), "{small}");
    let large = run_ok(&["rho", "--config", config(dir.path(), 2.0, "").to_str().unwrap()]);
    assert!(large.contains("verdict: approximation recommended"), "{large}");
    assert!(dir.path().join("out/run_rho.csv").exists());
}

#[test]
fn figure_writes_csvs_and_optional_svg() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let listed = run_ok(&["figure", "fig1", "--n", "50", "--out", out]);
    assert_eq!(listed.lines().count(), 3);
    assert!(!dir.path().join("fig1.svg").exists());
    let expected_rho = [(-0.5f64).exp(), (-2.0f64).exp(), (-4.5f64).exp()];
    for (k, rho) in (1..=3).zip(expected_rho) {
        let csv = std::fs::read_to_string(dir.path().join(format!("fig1_a{k}.csv"))).unwrap();
        let row = csv.lines().nth(1).unwrap();
        let got: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((got - rho).abs() < 1e-12, "panel {k}: {got}");
    }

    let listed = run_ok(&["figure", "fig1", "--n", "50", "--out", out, "--svg"]);
    assert_eq!(listed.lines().count(), 4);
    let svg = std::fs::read_to_string(dir.path().join("fig1.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("stroke-dasharray"));
}

#[test]
fn unknown_figure_is_rejected() {
    let out = grftail(&["figure", "fig3"]);
    assert!(!out.status.success());
}
