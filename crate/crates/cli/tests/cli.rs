use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn stagger(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stagger"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = stagger(dir, args);
    assert!(
        out.status.success(),
        "stagger {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Generates, contracts and builds a small instance; returns its path.
fn pipeline(dir: &Path) -> PathBuf {
    ok(dir, &["--seed", "3", "generate", "--out", "net", "--trips", "30", "--scenario", "hc"]);
    for f in ["nodes.csv", "edges.csv", "trips.csv", "scenario.toml"] {
        assert!(dir.join("net").join(f).exists(), "{f} missing");
    }
    ok(dir, &["contract", "--graph", "net", "--out", "small", "--reduction", "0.3"]);
    ok(dir, &["build-instance", "--graph", "small", "--out", "inst.json"]);
    dir.join("inst.json")
}

#[test]
fn offline_solve_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);

    let stats: Value = serde_json::from_str(&ok(dir, &["stats", "--instance", "inst.json"])).unwrap();
    assert_eq!(stats["trips"], 30);
    ok(dir, &["preprocess", "--instance", "inst.json", "--out", "diag.json"]);
    assert!(json(dir.join("diag.json")).is_object());

    ok(dir, &["solve", "--instance", "inst.json", "--out", "off", "--no-milp"]);
    for f in ["schedule.csv", "shifts.csv", "iterations.csv", "report.json"] {
        assert!(dir.join("off").join(f).exists(), "{f} missing");
    }
    let report = json(dir.join("off/report.json"));
    let ub = report["upper_bound"].as_f64().unwrap();
    assert!(ub <= report["uncontrolled"].as_f64().unwrap());
    assert!(report["lower_bound"].as_f64().unwrap() <= ub + 1e-9);

    let eval: Value =
        serde_json::from_str(&ok(dir, &["evaluate", "--instance", "inst.json", "--shifts", "off/shifts.csv"])).unwrap();
    assert_eq!(eval["upper_bound"].as_f64().unwrap(), ub);
}

#[test]
fn infeasible_shifts_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    let inst = json(dir.join("inst.json"));
    let first = inst["trips"][0]["id"].as_str().unwrap().to_string();
    std::fs::write(dir.join("bad.csv"), format!("trip_id,shift_s\n{first},1e6\n")).unwrap();
    let out = stagger(dir, &["evaluate", "--instance", "inst.json", "--shifts", "bad.csv"]);
    assert!(!out.status.success());
}

#[test]
fn online_solve_writes_epoch_log() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    ok(dir, &["solve", "--instance", "inst.json", "--mode", "online", "--epoch-length", "30", "--out", "on", "--no-milp"]);
    let log = std::fs::read_to_string(dir.join("on/epochs.csv")).unwrap();
    assert!(log.starts_with("epoch,trips,transfer,dummy,ub_s,lb_s,elapsed_s"));
    assert!(log.lines().count() > 2);
    assert_eq!(json(dir.join("on/report.json"))["status"], "feasible");
}

#[test]
fn zero_budget_sweep_point_is_uncontrolled() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    ok(dir, &["--jobs", "2", "sweep-zeta", "--instance", "inst.json", "--zetas", "0,0.1", "--out", "sweep.csv", "--no-milp"]);
    let mut rdr = csv::Reader::from_path(dir.join("sweep.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let zero = &rows[0];
    assert_eq!(zero[col("zeta")].parse::<f64>().unwrap(), 0.0);
    assert_eq!(zero[col("ub_s")], zero[col("uncontrolled_s")]);
    assert!(stagger(dir, &["sweep-zeta", "--instance", "inst.json", "--zetas", "0.5", "--out", "x.csv"]).status.code() != Some(0));
}

#[test]
fn config_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.toml"), "[solver]\ntime_limt = 3\n").unwrap();
    let out = stagger(dir, &["--config", "bad.toml", "generate", "--out", "net"]);
    assert!(!out.status.success());
}

#[test]
fn solver_backed_solve() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let has_bindings = Command::new("python3")
        .args(["-c", "import highspy"])
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false);
    if !has_bindings {
        eprintln!("solver bindings missing, skipped");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    let adapter = root.join("configs/highs.toml");
    ok(
        dir,
        &["solve", "--instance", "inst.json", "--out", "milp", "--time-limit", "10", "--adapter", adapter.to_str().unwrap()],
    );
    let report = json(dir.join("milp/report.json"));
    assert!(report["lower_bound"].as_f64().unwrap() <= report["upper_bound"].as_f64().unwrap() + 1e-9);
    let log = std::fs::read_to_string(dir.join("milp/iterations.csv")).unwrap();
    assert!(log.starts_with("iter,phase,ub_s,lb_s,elapsed_s"));
}
