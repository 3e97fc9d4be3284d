use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sssa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sssa"))
        .args(args)
        .env("SSSA_LOG", "error")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = sssa(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn tiny_bundle(dir: &Path, rho: &str) {
    ok(&["synth", "--preset", "lr", "--rho", rho, "--seed", "7", "-o", p(dir)]);
}

#[test]
fn synth_writes_a_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b");
    tiny_bundle(&b, "0.5");
    let meta = json(&b.join("meta.json"));
    assert_eq!(meta["D"], 50);
    assert_eq!(meta["N"], 60);
    assert_eq!(meta["K"], 3);
    for f in ["X_observed.csv", "mask.csv", "X_true.csv", "labels_true.csv"] {
        assert!(b.join(f).exists(), "{f}");
    }
    let x = std::fs::read_to_string(b.join("X_observed.csv")).unwrap();
    assert_eq!(x.lines().count(), 50);
    assert!(x.contains("NaN"));
}

#[test]
fn complete_data_has_all_ones_mask() {
    let dir = tempfile::tempdir().unwrap();
    tiny_bundle(dir.path(), "0");
    let mask = std::fs::read_to_string(dir.path().join("mask.csv")).unwrap();
    assert!(mask.lines().all(|l| l.split(',').all(|v| v == "1")));
}

#[test]
fn fit_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let (b, out) = (dir.path().join("b"), dir.path().join("fit"));
    tiny_bundle(&b, "0.2");
    ok(&["fit", p(&b), "--outer-max-iter", "3", "-o", p(&out)]);
    for f in ["X_hat.csv", "C.csv", "labels.csv", "report.json", "timing.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report = json(&out.join("report.json"));
    assert_eq!(report["method"], "sssa");
    assert!(report["trace"]["records"].as_array().unwrap().len() <= 3);
    assert!(report["mstep"]["lambda_z"].as_f64().unwrap() > 0.0);

    let c = std::fs::read_to_string(out.join("C.csv")).unwrap();
    assert_eq!(c.lines().next(), Some("row,col,value"));

    let printed: Value = serde_json::from_str(&ok(&["eval", p(&b), p(&out)])).unwrap();
    assert_eq!(printed, report["metrics"]);
}

#[test]
fn baseline_runs_one_pass() {
    let dir = tempfile::tempdir().unwrap();
    let (b, out) = (dir.path().join("b"), dir.path().join("fit"));
    tiny_bundle(&b, "0.3");
    ok(&["fit", p(&b), "--method", "ssc-ewzf", "--no-timing", "-o", p(&out)]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["trace"]["records"].as_array().unwrap().len(), 1);
    assert_eq!(report["mstep"]["lambda_e"], Value::Null);
    assert!(!out.join("timing.json").exists());
}

#[test]
fn complete_data_is_returned_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let (b, out) = (dir.path().join("b"), dir.path().join("fit"));
    tiny_bundle(&b, "0");
    ok(&["fit", p(&b), "-o", p(&out)]);
    let observed = std::fs::read_to_string(b.join("X_observed.csv")).unwrap();
    let x_hat = std::fs::read_to_string(out.join("X_hat.csv")).unwrap();
    assert_eq!(observed, x_hat);
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    ok(&[
        "sweep", "--preset", "lr", "--rho", "0.1,0.2", "--method", "ssc-ewzf", "--trials", "2", "--seed", "4",
        "--no-timing", "-o", p(&out),
    ]);
    let rows = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = rows.lines();
    assert!(lines.next().unwrap().starts_with("method,rho,D,N_k,K,d,sigma,outlier_frac,trial,seed,status,e_c,e_r"));
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 4);
    let seeds: Vec<&str> = body.iter().map(|l| l.split(',').nth(9).unwrap()).collect();
    assert_eq!(seeds, ["4", "5", "4", "5"]);
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 3);
    let cfg = json(&out.join("config.json"));
    assert_eq!(cfg["trials"], 2);
}

#[test]
fn calibrate_reports_best_point() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b");
    ok(&["synth", "--preset", "lr", "--rho", "0.1", "--seed", "1", "-o", p(&b)]);
    let out = dir.path().join("cal.json");
    ok(&[
        "calibrate", p(&b), "--grid-alpha-e", "1", "--grid-alpha-z", "100,300", "--outer-max-iter", "2", "-o",
        p(&out),
    ]);
    let report = json(&out);
    assert_eq!(report["points"].as_array().unwrap().len(), 2);
    assert_eq!(report["best"]["alpha_e"], 1.0);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = dir.path().join("fit");

    assert_eq!(sssa(&["fit", "--bogus"]).status.code(), Some(2));
    assert_eq!(sssa(&["fit", p(&missing), "-o", p(&out)]).status.code(), Some(3));

    let b = dir.path().join("b");
    tiny_bundle(&b, "0.2");
    assert_eq!(sssa(&["fit", p(&b), "--method", "nope", "-o", p(&out)]).status.code(), Some(2));

    // A NaN where the mask says observed.
    let mask = std::fs::read_to_string(b.join("mask.csv")).unwrap();
    let x = std::fs::read_to_string(b.join("X_observed.csv")).unwrap();
    let (row, col) = mask
        .lines()
        .enumerate()
        .find_map(|(i, l)| l.split(',').position(|v| v == "1").map(|j| (i, j)))
        .unwrap();
    let broken: Vec<String> = x
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i != row {
                return l.to_string();
            }
            let mut cells: Vec<&str> = l.split(',').collect();
            cells[col] = "NaN";
            cells.join(",")
        })
        .collect();
    std::fs::write(b.join("X_observed.csv"), broken.join("\n") + "\n").unwrap();
    let res = sssa(&["fit", p(&b), "-o", p(&out)]);
    assert_eq!(res.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&res.stderr).contains("error"));
}
