use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use cqr_core::analysis::{self, ExperimentRecord, Method, TrainingPlan};
use cqr_core::bounds::classify_regime;
use cqr_core::conformal::{cqr_calibrate, cqr_interval};
use cqr_core::dataio::{load_csv, TabularSchema};
use cqr_core::CqrModelPair;
use serde_json::Value;

fn cqr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqr")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fit_recovers_inverse_law() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<ExperimentRecord> = [100usize, 300, 1000, 3000, 10_000]
        .iter()
        .map(|&n| ExperimentRecord {
            method: Method::Cqr,
            n,
            m: 500,
            alpha: 0.1,
            trial: 0,
            delta: 1.0 / n as f64,
            coverage: 0.9,
            mean_length: 1.0,
            q_hat: 0.0,
            regime: classify_regime(n, 500, 0.1),
            seed: 0,
            crossing_rate: 0.0,
        })
        .collect();
    let path = dir.path().join("records.csv");
    analysis::write_records_csv(fs::File::create(&path).unwrap(), &records).unwrap();

    ok(cqr(dir.path(), &["--out", "o", "fit", "--records", "records.csv"]));
    let summary = json(&dir.path().join("o/fit.json"));
    let fit = &summary["fits"][0];
    assert!((fit["slope"].as_f64().unwrap() + 1.0).abs() <= 1e-12, "{summary}");
    assert_eq!(fit["point_count"].as_u64(), Some(5));
    assert_eq!(summary["against"], "n");
}

#[test]
fn tiny_sweep_writes_one_record_quickly() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 11\n[sweep]\nn_grid = [200]\nm_grid = [200]\nalpha_grid = [0.2]\ntrials = 1\n",
    )
    .unwrap();
    let start = Instant::now();
    ok(cqr(dir.path(), &["--config", "run.toml", "--out", "o", "sweep"]));
    assert!(start.elapsed() < Duration::from_secs(10), "took {:?}", start.elapsed());
    let text = fs::read_to_string(dir.path().join("o/records.csv")).unwrap();
    let recs = analysis::read_records_csv(text.as_bytes()).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!((recs[0].n, recs[0].m, recs[0].alpha), (200, 200, 0.2));
    assert!(text.starts_with("method,n,m,alpha,trial,delta,coverage,mean_length,q_hat,regime,seed\n"));
}

#[test]
fn sweep_output_is_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[sweep]\nn_grid = [200, 400]\nm_grid = [100]\nalpha_grid = [0.1, 0.2]\ntrials = 2\ntest_size = 200\n",
    )
    .unwrap();
    ok(cqr(dir.path(), &["--config", "run.toml", "--workers", "1", "--out", "a", "sweep"]));
    ok(cqr(dir.path(), &["--config", "run.toml", "--workers", "3", "--out", "b", "sweep"]));
    let a = fs::read(dir.path().join("a/records.csv")).unwrap();
    let b = fs::read(dir.path().join("b/records.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn crossed_quantiles_give_explicit_empty_interval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = |gamma: f64, theta: f64| {
        format!(
            r#"{{"gamma": {gamma}, "theta": [{theta}], "meta": {{"n": 1, "schedule": {{"kind": "constant", "c": 0.1}},
               "tuned": false, "batch_size": 1, "epochs": 1, "projection_radius": null, "seed": 0}}}}"#
        )
    };
    fs::write(d.join("lo.json"), model(0.05, 1.0)).unwrap();
    fs::write(d.join("hi.json"), model(0.95, -1.0)).unwrap();
    fs::write(d.join("cal.json"), r#"{"method": "cqr", "alpha": 0.1, "m": 100, "k": 91, "q_hat": 0.1}"#).unwrap();
    fs::write(d.join("test.csv"), "x0,y\n1.0,0.0\n0.0,0.0\n").unwrap();
    ok(cqr(
        d,
        &[
            "--out",
            "o",
            "predict",
            "--data",
            "test.csv",
            "--calibration",
            "cal.json",
            "--lower",
            "lo.json",
            "--upper",
            "hi.json",
        ],
    ));
    let text = fs::read_to_string(d.join("o/predictions.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "row,lo,hi,empty,y,covered");
    // x = 1: band [1, -1] widened by 0.1 on each side is still inverted
    assert_eq!(lines[1], "0,,,true,0,false");
    // x = 0: the band collapses to 0, widened to [-0.1, 0.1]
    assert_eq!(lines[2], "1,-0.1,0.1,false,0,true");
}

#[test]
fn train_calibrate_predict_matches_in_process_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), "seed = 5\n[synth]\nn = 600\nm = 300\ntest_size = 200\n").unwrap();
    let run = |args: &[&str]| {
        let mut full = vec!["--config", "run.toml", "--out", "o"];
        full.extend_from_slice(args);
        ok(cqr(d, &full))
    };
    run(&["synth"]);
    run(&["train", "--data", "o/train.csv", "--gamma", "0.05", "--output", "o/lo.json"]);
    run(&["train", "--data", "o/train.csv", "--gamma", "0.95", "--output", "o/hi.json"]);
    run(&[
        "calibrate",
        "--data",
        "o/calibration.csv",
        "--alpha",
        "0.1",
        "--lower",
        "o/lo.json",
        "--upper",
        "o/hi.json",
    ]);
    run(&[
        "predict",
        "--data",
        "o/test.csv",
        "--calibration",
        "o/calibration.json",
        "--lower",
        "o/lo.json",
        "--upper",
        "o/hi.json",
    ]);

    let load = |name: &str| {
        let path = d.join("o").join(name);
        load_csv(&path, &TabularSchema::from_header(&path, "y").unwrap()).unwrap()
    };
    let (train, cal, test) = (load("train.csv"), load("calibration.csv"), load("test.csv"));
    let plan = TrainingPlan::default();
    let fit = |gamma: f64| analysis::train_with_plan(&train, gamma, &plan, analysis::model_seed(5, gamma)).unwrap().0;
    let pair = CqrModelPair::new(fit(0.05), fit(0.95), 0.1).unwrap();

    let theta = |name: &str| -> Vec<f64> {
        json(&d.join("o").join(name))["theta"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
    };
    assert_eq!(theta("lo.json"), pair.lower.theta);
    assert_eq!(theta("hi.json"), pair.upper.theta);

    let q_hat = cqr_calibrate(&pair, &cal).unwrap().q_hat;
    assert_eq!(json(&d.join("o/calibration.json"))["q_hat"].as_f64(), Some(q_hat));

    let text = fs::read_to_string(d.join("o/predictions.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), test.len());
    for (row, s) in rows.iter().zip(&test) {
        let c = cqr_interval(&pair, q_hat, &s.x).unwrap();
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[3], c.empty.to_string());
        if !c.empty {
            assert_eq!(cols[1].parse::<f64>().unwrap(), c.lo);
            assert_eq!(cols[2].parse::<f64>().unwrap(), c.hi);
        }
    }
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "[sweep]\ntrails = 3\n").unwrap();
    assert_eq!(cqr(d, &["--config", "bad.toml", "sweep"]).status.code(), Some(2));
    assert_eq!(cqr(d, &["--config", "missing.toml", "sweep"]).status.code(), Some(2));

    assert_eq!(cqr(d, &["train", "--data", "nope.csv", "--gamma", "0.5"]).status.code(), Some(3));
    fs::write(d.join("bad.csv"), "x0,y\n1.0,2.0\nabc,3.0\n").unwrap();
    let out = cqr(d, &["train", "--data", "bad.csv", "--gamma", "0.5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    fs::write(d.join("cal.csv"), "x0,y\n1.0,2.0\n1.0,3.0\n").unwrap();
    fs::write(
        d.join("med.json"),
        r#"{"gamma": 0.5, "theta": [1.0], "meta": {"n": 1, "schedule": {"kind": "constant", "c": 0.1},
            "tuned": false, "batch_size": 1, "epochs": 1, "projection_radius": null, "seed": 0}}"#,
    )
    .unwrap();
    let out = cqr(d, &["calibrate", "--data", "cal.csv", "--alpha", "0.1", "--median", "med.json"]);
    assert_eq!(out.status.code(), Some(4));
    let ok_out = cqr(d, &["--out", "o", "calibrate", "--data", "cal.csv", "--alpha", "0.5", "--median", "med.json"]);
    assert!(ok_out.status.success());
}

#[test]
fn bounds_command_reports_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[bounds]\nb = 1.0\nk = 1.0\nd = 2\nlambda_min = 0.2\nlambda_max = 0.5\nf_min = 0.5\nf_max = 2.0\nn = 1000\nm = 1000\nalpha = 0.1\n",
    )
    .unwrap();
    ok(cqr(dir.path(), &["--config", "run.toml", "--out", "o", "bounds"]));
    let report = json(&dir.path().join("o/bounds.json"));
    let cqr_total = report["cqr"]["total"].as_f64().unwrap();
    let cmr_total = report["cmr"]["total"].as_f64().unwrap();
    assert!(cqr_total.is_finite() && cqr_total > 0.0);
    assert!(cmr_total.is_finite() && cmr_total > 0.0);
    assert_eq!(report["m_condition_holds"], Value::Bool(true));
}
