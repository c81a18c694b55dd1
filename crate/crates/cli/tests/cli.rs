use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn soliton(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soliton"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,a,da,b,db,f,df,Q,R,H"));
    lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

#[test]
fn integrate_collapsed_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = soliton(&["integrate", "--n", "1", "--k", "2", "--p", "2", "--f0", "-10", "--s-max", "60"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path());
    assert_eq!(s["run"]["classification"]["label"], "Collapsed");
    assert_eq!(s["settings"]["controls"]["rel_tol"], 1e-10);
    assert_eq!(s["settings"]["controls"]["s_max"], 60.0);
    assert_eq!(s["settings"]["series_order"], 10);
    let checks = s["run"]["invariants"]["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["status"] != "Fail"));
    let r = rows(&dir.path().join("trajectory.csv"));
    assert_eq!(r.last().unwrap()[0], 60.0);
    let tail = &r[r.len() - 10..];
    assert!(tail.windows(2).all(|w| w[1][7] < w[0][7]));
}

#[test]
fn euclidean_cone_rows_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = soliton(&["cone", "--n", "1", "--a0", "0", "--b0", "0", "--s-max", "10"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(dir.path())["case"]["label"], "Euclidean");
    for row in rows(&dir.path().join("trajectory.csv")) {
        let s = row[0];
        assert!((row[1] - s).abs() <= 1e-10 && (row[3] - s).abs() <= 1e-10);
        assert!((row[7] - 1.0).abs() <= 1e-10);
        assert!(row[8].abs() <= 1e-10 && row[9].abs() <= 1e-10);
    }
}

#[test]
fn oracle_and_shoot_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = soliton(&["oracle", "--n", "1", "--a1", "3"], dir.path());
    assert!(o.status.success());
    let c = &summary(dir.path())["comparison"];
    assert!(c["max_rel_err_a"].as_f64().unwrap() <= 1e-6);
    assert!(c["max_rel_err_b"].as_f64().unwrap() <= 1e-6);

    let dir = tempfile::tempdir().unwrap();
    let o = soliton(&["shoot", "--n", "1", "--k", "3", "--p", "2", "--tol-f0", "1e-10"], dir.path());
    assert!(o.status.success());
    let stdout: Value = serde_json::from_slice(&o.stdout).unwrap();
    let shoot = &stdout["shoot"];
    assert_eq!(shoot["verified"], true);
    assert!(shoot["width"].as_f64().unwrap() <= 1e-10);
    assert!(dir.path().join("critical.csv").exists());
}

#[test]
fn sweep_writes_one_file_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_soliton"))
        .args(["sweep", "--n", "1", "--k", "3", "--p", "2", "--points", "5", "--format", "json", "--out"])
        .arg(dir.path())
        .env("SOLITON_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path());
    assert_eq!(s["parallel"], false);
    assert_eq!(s["runs"].as_array().unwrap().len(), 5);
    for i in 0..5 {
        assert!(dir.path().join(format!("sweep_{i:03}.json")).exists());
    }
}

#[test]
fn module_errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let o = soliton(&["shoot", "--n", "1", "--k", "2", "--p", "2"], dir.path());
    assert!(!o.status.success());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "NotApplicable");

    let o = soliton(&["cone", "--a0", "1", "--b0", "1"], dir.path());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "InvalidCase");
}
