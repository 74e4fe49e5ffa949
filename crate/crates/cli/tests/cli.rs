//! End-to-end runs of the `rwrek` binary.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn laws_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../laws")
}

fn rwrek(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwrek")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn law_a_path() -> String {
    laws_dir().join("law_a.txt").to_string_lossy().into_owned()
}

#[test]
fn validate_law_a() {
    let o = rwrek(&["validate", "--law", &law_a_path()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("epsilon_0 = 0.25"), "{text}");
    assert!(text.contains("regime = Polynomial"), "{text}");
}

#[test]
fn validate_rejects_non_elliptic_law() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(&path, "1.0 0.0 0.0 1.0\n").unwrap();
    let o = rwrek(&["validate", "--law", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).to_lowercase().contains("ellipticity"), "{}", stderr(&o));
}

#[test]
fn malformed_law_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(&path, "# header\n0.5 0 0.5 0.5\n0.5 zero 0.5 0.5\n").unwrap();
    let o = rwrek(&["validate", "--law", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn rates_of_law_a() {
    let o = rwrek(&["rates", "--law", &law_a_path()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let prediction = &v["report"]["prediction"];
    assert_eq!(prediction["kind"], "Polynomial");
    let d = prediction["exponent"].as_f64().unwrap();
    assert!((d - 2.0 * 2f64.ln() / 3f64.ln()).abs() < 1e-10, "{d}");
}

#[test]
fn rates_without_holding_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("moving.txt");
    fs::write(&path, "0.75 0 0.25 0.5\n0.25 0 0.75 0.5\n").unwrap();
    let o = rwrek(&["rates", "--law", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = rwrek(&["validate", "--law", &law_a_path(), "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn construct_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("explog.txt");
    let o = rwrek(&[
        "construct",
        "--q",
        "explog:1,1",
        "--eps",
        "1",
        "--n0",
        "2",
        "--n-trunc",
        "2000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("explog.txt.manifest.json").exists());
    let o = rwrek(&["validate", "--law", out.to_str().unwrap(), "--n-max", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("regime = Intermediate"), "{}", stdout(&o));
}

#[test]
fn construct_line_law_files() {
    for (file, regime) in [("explog.txt", "Intermediate"), ("exppow.txt", "StretchedExponential")] {
        let path = laws_dir().join(file);
        let o = rwrek(&["validate", "--law", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains(&format!("regime = {regime}")), "{}", stdout(&o));
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!("# annealed run\nlaw = {}\nr = 0.9\ngrid = 4:6\nenvs = 20\nseed = 5\n", law_a_path()),
    )
    .unwrap();
    let via_config = rwrek(&["simulate-annealed", "--config", cfg.to_str().unwrap(), "--r", "0.5"]);
    assert_eq!(via_config.status.code(), Some(0), "{}", stderr(&via_config));
    let direct = rwrek(&[
        "simulate-annealed",
        "--law",
        &law_a_path(),
        "--r",
        "0.5",
        "--grid",
        "4:6",
        "--envs",
        "20",
        "--seed",
        "5",
    ]);
    assert_eq!(via_config.stdout, direct.stdout);
    let killed_harder = rwrek(&["simulate-annealed", "--config", cfg.to_str().unwrap()]);
    assert_ne!(killed_harder.stdout, direct.stdout);
}

#[test]
fn quenched_curve_is_bracketed() {
    let o = rwrek(&[
        "simulate-quenched",
        "--law",
        &law_a_path(),
        "--seed",
        "3",
        "--r",
        "0.5",
        "--n",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,survival_lower,survival_upper"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 51);
    assert!(rows.iter().all(|r| r[1] <= r[2] && r[2] <= 1.0));
}

#[test]
fn srw_check_passes() {
    let o = rwrek(&["srw-check", "--l", "20", "--n", "100000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["pass"], true, "{v}");
}

#[test]
fn simulate_fit_compare_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("curve.csv");
    let o = rwrek(&[
        "simulate-annealed",
        "--law",
        &law_a_path(),
        "--r",
        "0.5",
        "--grid",
        "4:9",
        "--envs",
        "200",
        "--seed",
        "1",
        "--out",
        curve.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("curve.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    let o = rwrek(&["fit", "--curve", curve.to_str().unwrap(), "--regime", "polynomial"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(fit["slope"].as_f64().unwrap() < 0.0, "{fit}");

    let o = rwrek(&["compare", "--curve", curve.to_str().unwrap(), "--law", &law_a_path()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let verdict: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["predicted", "fitted", "bracket", "pass"] {
        assert!(verdict.get(key).is_some(), "{verdict}");
    }
}

#[test]
fn fit_with_too_few_points_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("short.csv");
    fs::write(&curve, "n,p,stderr,lower,upper\n16,0.5,0.01,0.5,0.5\n32,0.3,0.01,0.3,0.3\n").unwrap();
    let o = rwrek(&["fit", "--curve", curve.to_str().unwrap(), "--regime", "polynomial"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
