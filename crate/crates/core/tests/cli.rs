use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixfreq::io::MC_COLUMNS;
use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mixfreq"));
    c.env_remove("MIXFREQ_OUTPUT_DIR");
    c
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {text}"))
}

/// Every file under `dir`, relative path -> bytes.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn dgp_config() -> Value {
    json!({ "dgp": { "t": 40, "seed": 4 } })
}

#[test]
fn simulate_writes_dataset_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.json", &dgp_config());
    let out = tmp.path().join("out");
    ok(&["simulate", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    let files = snapshot(&out);
    for f in ["manifest.json", "ratio_1.csv", "ratio_3.csv", "run-manifest.json"] {
        assert!(files.contains_key(f), "{f} missing");
    }
    let ds = mixfreq::io::load_dataset(&out.join("manifest.json")).unwrap();
    assert_eq!(ds.n(), 40);
    assert_eq!(ds.covariates().len(), 3);

    let manifest: Value = serde_json::from_slice(&files["run-manifest.json"]).unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["seeds"]["dgp.seed"], 4);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest.get("version").is_some());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.json", &dgp_config());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["simulate", cfg.to_str().unwrap(), "--output-dir", a.to_str().unwrap()]);
    ok(&["simulate", cfg.to_str().unwrap(), "--output-dir", b.to_str().unwrap()]);
    assert_eq!(snapshot(&a), snapshot(&b));

    let c = tmp.path().join("c");
    ok(&["simulate", cfg.to_str().unwrap(), "--seed", "5", "--output-dir", c.to_str().unwrap()]);
    assert_ne!(snapshot(&a)["ratio_1.csv"], snapshot(&c)["ratio_1.csv"]);
}

#[test]
fn gridsearch_independent_of_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "grid.json",
        &json!({
            "dgp": { "t": 30 },
            "h_m": 1,
            "model": { "kind": "fa-lstm", "lags": 3, "timesteps": 2 },
            "grid": {
                "epochs": [5],
                "dropout": [0.0],
                "batch": [{ "fraction": 0.5 }],
                "cells": [[2], [3]]
            },
            "seed": 1
        }),
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["gridsearch", cfg.to_str().unwrap(), "--jobs", "1", "--output-dir", a.to_str().unwrap()]);
    ok(&["gridsearch", cfg.to_str().unwrap(), "--jobs", "3", "--output-dir", b.to_str().unwrap()]);
    assert_eq!(snapshot(&a), snapshot(&b));
    let scores = fs::read_to_string(a.join("grid_scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 3);
}

#[test]
fn montecarlo_csv_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "mc.json",
        &json!({
            "dgp": { "t": 30 },
            "horizons": [1, 3],
            "roster": [{ "kind": "midas" }, { "kind": "u-midas" }, { "kind": "oracle" }],
            "replications": 3,
            "estimations": 1,
            "midas_search": { "tuning_replications": 2 },
            "seed": 0
        }),
    );
    let out = tmp.path().join("out");
    ok(&["montecarlo", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    let mut rdr = csv::Reader::from_path(out.join("mc_results.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, MC_COLUMNS);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3 * 2);
    for r in &rows {
        assert!(["MIDAS", "U-MIDAS", "ORACLE"].contains(&&r[0]));
        assert!(["1", "3"].contains(&&r[1]));
        assert_eq!(&r[2], "30");
        assert!(r[3].parse::<f64>().unwrap() > 0.0);
        assert!(r[4].parse::<f64>().unwrap() >= 0.0);
        r[5].parse::<usize>().unwrap();
        // p-value empty for the MIDAS row itself
        if &r[0] == "MIDAS" {
            assert_eq!(&r[6], "");
        } else {
            let p: f64 = r[6].parse().unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }
    let json: Value = serde_json::from_slice(&fs::read(out.join("mc_results.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn pipeline_simulate_forecast_evaluate_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let cfg = write_config(tmp.path(), "sim.json", &json!({ "dgp": { "t": 40 }, "output_dir": "data" }));
    ok(&["simulate", cfg.to_str().unwrap()]);
    let before = snapshot(&data);

    let fc = write_config(
        tmp.path(),
        "fc.json",
        &json!({
            "dataset": "data/manifest.json",
            "output_dir": "fc",
            "rolling": {
                "horizons": [1],
                "models": [
                    { "name": "AR(1)", "model": { "kind": "ar1" } },
                    { "name": "U-MIDAS", "model": { "kind": "u-midas", "lags": 3 } },
                    { "name": "MIDAS", "model": { "kind": "midas", "lags": 12, "weighting": "normalized" } }
                ]
            }
        }),
    );
    ok(&["forecast", fc.to_str().unwrap()]);
    let fc_dir = tmp.path().join("fc/forecasts");
    for f in ["ar-1.csv", "u-midas.csv", "midas.csv"] {
        assert!(fc_dir.join(f).exists());
    }
    // inputs are untouched
    assert_eq!(before, snapshot(&data));

    let ev = write_config(
        tmp.path(),
        "ev.json",
        &json!({
            "output_dir": "ev",
            "forecasts": { "AR(1)": "fc/forecasts/ar-1.csv", "MIDAS": "fc/forecasts/midas.csv" },
            "benchmark": "AR(1)",
            "windows": [{ "name": "late", "periods": [{ "start": 36, "end": 40 }] }]
        }),
    );
    ok(&["evaluate", ev.to_str().unwrap()]);
    let table = fs::read_to_string(tmp.path().join("ev/evaluation.csv")).unwrap();
    assert!(table.starts_with("window,model,h_m,n,rmsfe,relative_mse,"));
    assert!(table.lines().any(|l| l.starts_with("all,MIDAS,1,")));
    assert!(table.lines().any(|l| l.starts_with("late,MIDAS,1,5,")));

    let rep = write_config(
        tmp.path(),
        "rep.json",
        &json!({ "output_dir": "rep", "benchmark": "fc/forecasts/ar-1.csv", "model": "fc/forecasts/midas.csv" }),
    );
    ok(&["report", rep.to_str().unwrap()]);
    let cum = fs::read_to_string(tmp.path().join("rep/cumsfe.csv")).unwrap();
    assert_eq!(cum.lines().next().unwrap(), "x,y");
    let n_fc = fs::read_to_string(fc_dir.join("ar-1.csv")).unwrap().lines().count();
    assert_eq!(cum.lines().count(), n_fc);
}

#[test]
fn align_and_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.json", &json!({ "dgp": { "t": 40 }, "output_dir": "data" }));
    ok(&["simulate", cfg.to_str().unwrap()]);
    let al = write_config(
        tmp.path(),
        "al.json",
        &json!({ "dataset": "data/manifest.json", "h_m": 1, "lags": 2, "ar_lags": 1, "output_dir": "al" }),
    );
    ok(&["align", al.to_str().unwrap()]);
    let text = fs::read_to_string(tmp.path().join("al/aligned.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 1 + 3 * 2 + 1 + 2);
    assert_eq!(text.lines().count(), 41);

    let fit = write_config(
        tmp.path(),
        "fit.json",
        &json!({ "dataset": "data/manifest.json", "h_m": 1, "model": { "kind": "u-midas", "lags": 3 }, "output_dir": "fit" }),
    );
    ok(&["fit", fit.to_str().unwrap()]);
    let v: Value = serde_json::from_slice(&fs::read(tmp.path().join("fit/fit.json")).unwrap()).unwrap();
    assert_eq!(v["model"]["kind"], "u-midas");
    assert!(!v["parameters"].is_null());
}

#[test]
fn schema_errors_exit_2_with_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();

    let cfg = write_config(tmp.path(), "a.json", &json!({ "dgp": { "t": 40, "bogus": 1 } }));
    let r = run(&["simulate", cfg.to_str().unwrap(), "--output-dir", o]);
    assert_eq!(r.status.code(), Some(2));
    let e = stderr_json(&r);
    assert_eq!(e["error"], "config");
    assert_eq!(e["field"], "dgp.bogus");

    let cfg = write_config(tmp.path(), "b.json", &json!({ "dgp": { "t": "many" } }));
    let r = run(&["simulate", cfg.to_str().unwrap(), "--output-dir", o]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(stderr_json(&r)["field"], "dgp.t");

    // semantic validation also reports the field
    let cfg = write_config(tmp.path(), "c.json", &dgp_config());
    let r = run(&["simulate", cfg.to_str().unwrap(), "--set", "dgp.t=5", "--output-dir", o]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(stderr_json(&r)["field"], "dgp.t");

    let r = run(&["simulate", cfg.to_str().unwrap(), "--set", "nonsense", "--output-dir", o]);
    assert_eq!(r.status.code(), Some(2));

    let r = run(&["simulate", tmp.path().join("missing.json").to_str().unwrap(), "--output-dir", o]);
    assert_eq!(r.status.code(), Some(2));

    let cfg = write_config(tmp.path(), "d.json", &json!({ "dataset": "x", "h_m": 1, "lags": 2, "extra": true }));
    let r = run(&["align", cfg.to_str().unwrap(), "--output-dir", o]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(stderr_json(&r)["field"], "extra");
}

#[test]
fn runtime_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "a.json",
        &json!({ "dataset": "nowhere/manifest.json", "h_m": 1, "lags": 2 }),
    );
    let r = run(&["align", cfg.to_str().unwrap(), "--output-dir", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(stderr_json(&r)["error"], "runtime");
}

#[test]
fn output_dir_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.json", &json!({ "dgp": { "t": 30 }, "output_dir": "from-config" }));
    let env_dir = tmp.path().join("from-env");
    let flag_dir = tmp.path().join("from-flag");

    let r = bin()
        .args(["simulate", cfg.to_str().unwrap()])
        .env("MIXFREQ_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(r.status.success());
    assert!(tmp.path().join("from-config/manifest.json").exists());
    assert!(!env_dir.exists());

    let r = bin()
        .args(["simulate", cfg.to_str().unwrap(), "--output-dir", flag_dir.to_str().unwrap()])
        .env("MIXFREQ_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(r.status.success());
    assert!(flag_dir.join("manifest.json").exists());

    let plain = write_config(tmp.path(), "plain.json", &json!({ "dgp": { "t": 30 } }));
    let r = bin()
        .args(["simulate", plain.to_str().unwrap()])
        .env("MIXFREQ_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(r.status.success());
    assert!(env_dir.join("manifest.json").exists());
}

#[test]
fn override_paths() {
    let mut v = json!({ "a": { "b": 1 } });
    mixfreq::cli::set_path(&mut v, "a.c.d", json!(2)).unwrap();
    mixfreq::cli::set_path(&mut v, "a.b", json!("x")).unwrap();
    assert_eq!(v, json!({ "a": { "b": "x", "c": { "d": 2 } } }));
    assert!(mixfreq::cli::set_path(&mut v, "a.b.z", json!(1)).is_err());
    assert!(mixfreq::cli::set_path(&mut v, "a..b", json!(1)).is_err());
    assert_eq!(mixfreq::cli::slug("AR(1)"), "ar-1");
    assert_eq!(mixfreq::cli::slug("FA-LSTM"), "fa-lstm");
}
