use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_crystalflow"));
    c.env_remove("CRYSTALFLOW_THREADS");
    c
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn run(config: &Path, out: &Path) -> Output {
    bin().arg("run").arg(config).arg("--out").arg(out).output().unwrap()
}

fn wulff_config() -> Value {
    json!({
        "phi": {"kind": "l1"},
        "initial": {"kind": "wulff", "center": [0.0, 0.0], "radius": 0.5},
        "grid": {"cells": 64},
        "h": 0.004,
        "t_final": 0.04,
        "snapshot_stride": 5,
        "deterministic": true
    })
}

fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line on stderr");
    serde_json::from_str(line).expect("stderr carries JSON")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn wulff_run_shrinks_steadily() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = wulff_config();
    cfg["oracle_check"] = json!(true);
    let path = write_config(dir.path(), "wulff.json", &cfg);
    let out = dir.path().join("out");
    let res = run(&path, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let r = column(&csv, "inradius");
    assert_eq!(r.len(), 11);
    assert!(r.windows(2).all(|w| w[1] < w[0]), "{r:?}");
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["oracle"]["passed"], json!(true));
    assert_eq!(report["all_converged"], json!(true));
    assert!(out.join("mask_00005.f64grid").exists() && out.join("mask_00010.f64grid").exists());
}

#[test]
fn malformed_json_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\"phi\": {\"kind\": \"l1\"},").unwrap();
    let out = dir.path().join("out");
    let res = run(&path, &out);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_record(&res)["kind"], json!("input"));
    assert!(!out.exists());
}

#[test]
fn invalid_configs_exit_with_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut unknown = wulff_config();
    unknown["stepsize"] = json!(0.1);
    let mut schedule = wulff_config();
    schedule["schedule"] = json!([0.2, 0.1]);
    let mut expr = wulff_config();
    expr["initial"] = json!({"kind": "levelset", "expr": "x +* y"});
    let mut negative = wulff_config();
    negative["h"] = json!(-0.01);
    for (name, cfg) in [("unknown", unknown), ("schedule", schedule), ("expr", expr), ("negative", negative)] {
        let path = write_config(dir.path(), &format!("{name}.json"), &cfg);
        let out = dir.path().join(name);
        let res = run(&path, &out);
        assert_eq!(res.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(!out.exists(), "{name}");
    }
}

#[test]
fn unknown_verify_selector_is_an_input_error() {
    let res = bin().args(["verify", "quick"]).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    let rec = error_record(&res);
    assert_eq!(rec["level"], json!("error"));
    assert!(rec["message"].as_str().unwrap().contains("quick"));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "wulff.json", &wulff_config());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&path, &a).status.success());
    assert!(run(&path, &b).status.success());
    assert_eq!(files(&a), files(&b));
}

#[test]
fn report_reproduces_its_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = wulff_config();
    cfg["forcing"] = json!({"kind": "constant", "value": -1.0});
    cfg["initial"] = json!({"kind": "union", "balls": [
        {"center": [-0.3, 0.0], "radius": 0.2},
        {"center": [0.25, 0.1], "radius": 0.25}
    ]});
    let path = write_config(dir.path(), "union.json", &cfg);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&path, &a).status.success());
    let res = run(&a.join("report.json"), &b);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(files(&a), files(&b));
}

#[test]
fn oracle_window_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = wulff_config();
    cfg["initial"]["radius"] = json!(0.1);
    cfg["h"] = json!(0.01);
    cfg["oracle_check"] = json!(true);
    let path = write_config(dir.path(), "window.json", &cfg);
    let out = dir.path().join("out");
    let res = run(&path, &out);
    assert_eq!(res.status.code(), Some(3));
    let rec = error_record(&res);
    assert_eq!(rec["kind"], json!("oracle_window"));
    assert!((rec["limit"].as_f64().unwrap() - 0.01 / 3.0).abs() < 1e-12);
    assert!(!out.exists());
}

#[test]
fn levelset_run_with_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "phi": {"kind": "l1"},
        "psi": {"kind": "l2"},
        "mode": "levelset",
        "initial": {"kind": "levelset", "expr": "math::hypot(x, y) - 0.5"},
        "grid": {"cells": 48},
        "h": 0.004,
        "t_final": 0.012,
        "levels": {"count": 16},
        "schedule": [0.2, 0.1],
        "snapshot_stride": 1
    });
    let path = write_config(dir.path(), "ls.json", &cfg);
    let out = dir.path().join("out");
    let res = run(&path, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rep: Value = serde_json::from_str(&fs::read_to_string(out.join("approximation_report.json")).unwrap()).unwrap();
    assert_eq!(rep["schedule"], json!([0.2, 0.1]));
    assert!(out.join("levelset_metrics.csv").exists());
    assert!(out.join("levelset_00003.f64grid").exists());
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], json!("levelset"));
    assert!(report["config"]["levels"]["step"].as_f64().unwrap() > 0.0);
}

#[test]
fn converge_fits_a_rate() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = wulff_config();
    cfg["initial"]["radius"] = json!(0.3);
    cfg["grid"] = json!({"cells": 128, "half_width": 0.5});
    cfg["t_final"] = json!(0.024);
    cfg["ladder"] = json!({"h": [0.008, 0.004, 0.002]});
    let path = write_config(dir.path(), "conv.json", &cfg);
    let out = dir.path().join("out");
    let res = bin().arg("converge").arg(&path).arg("--out").arg(&out).output().unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("h,dx,radius,reference,error\n"));
    assert_eq!(column(&csv, "error").len(), 3);
    let rep: Value = serde_json::from_str(&fs::read_to_string(out.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(rep["reference"], json!("radius_law"));
    assert!(rep["rate"].as_f64().unwrap() > 0.5);
}

#[test]
fn converge_rejects_degenerate_ladders() {
    let dir = tempfile::tempdir().unwrap();
    for (name, ladder) in [
        ("repeat", json!({"h": [0.004, 0.004, 0.002]})),
        ("short", json!({"h": [0.004, 0.002]})),
        ("cells", json!({"h": [0.004, 0.002, 0.001], "cells": [32, 64]})),
    ] {
        let mut cfg = wulff_config();
        cfg["ladder"] = ladder;
        let path = write_config(dir.path(), &format!("{name}.json"), &cfg);
        let out = dir.path().join(name);
        let res = bin().arg("converge").arg(&path).arg("--out").arg(&out).output().unwrap();
        assert_eq!(res.status.code(), Some(2), "{name}");
        assert!(!out.exists(), "{name}");
    }
}
