use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cqr_core::analysis::{self, ExperimentRecord, FitResult, Method};
use cqr_core::bounds::{self, BoundTerms, Regime, TheoryConstants};
use cqr_core::conformal::{self, conformal_quantile_index};
use cqr_core::dataio::{self, TabularSchema};
use cqr_core::seed::{self, stream};
use cqr_core::{synth, CqrModelPair, Dataset, DistributionSpec, LinearQuantileModel, PredictionInterval, Schedule};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{reading, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub gamma: f64,
    pub theta: Vec<f64>,
    pub meta: ModelMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub n: usize,
    pub schedule: Schedule,
    pub tuned: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub projection_radius: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub method: Method,
    pub alpha: f64,
    pub m: usize,
    pub k: usize,
    pub q_hat: f64,
}

/// Which fitted models a calibrate / predict call works with.
pub enum ModelArgs {
    Cqr { lower: PathBuf, upper: PathBuf },
    Cmr { median: PathBuf },
}

enum Loaded {
    Cqr(CqrModelPair),
    Cmr(LinearQuantileModel),
}

fn ensure_out(cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

fn load_data(path: &Path, cfg: &RunConfig) -> CliResult<Dataset> {
    let schema = TabularSchema::from_header(path, &cfg.data.label).map_err(reading(path))?;
    dataio::load_csv(path, &schema).map_err(reading(path))
}

fn load_model(path: &Path) -> CliResult<LinearQuantileModel> {
    let file: ModelFile = read_json(path)?;
    LinearQuantileModel::new(file.theta, file.gamma).map_err(reading(path))
}

fn load_models(models: &ModelArgs, alpha: f64) -> CliResult<Loaded> {
    Ok(match models {
        ModelArgs::Cqr { lower, upper } => {
            Loaded::Cqr(CqrModelPair::new(load_model(lower)?, load_model(upper)?, alpha)?)
        }
        ModelArgs::Cmr { median } => Loaded::Cmr(load_model(median)?),
    })
}

fn or_default(path: Option<PathBuf>, cfg: &RunConfig, name: &str) -> PathBuf {
    path.unwrap_or_else(|| cfg.out.join(name))
}

pub fn synth(cfg: &RunConfig) -> CliResult<()> {
    let spec = cfg.synthetic_spec()?;
    ensure_out(cfg)?;
    let parts = [
        ("train.csv", cfg.synth.n, stream::TRAIN),
        ("calibration.csv", cfg.synth.m, stream::CALIBRATION),
        ("test.csv", cfg.synth.test_size, stream::TEST),
    ];
    for (name, count, tag) in parts {
        let data = synth::sample(&spec, count, seed::derive(cfg.seed, &[tag]))?;
        let path = cfg.out.join(name);
        dataio::write_csv(&path, &data).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    write_json(&cfg.out.join("synth.json"), &spec)?;
    println!(
        "wrote {} (n = {}, m = {}, test = {}, theta0 = {:?})",
        cfg.out.display(),
        cfg.synth.n,
        cfg.synth.m,
        cfg.synth.test_size,
        spec.theta0
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, data: &Path, gamma: f64, output: Option<PathBuf>) -> CliResult<()> {
    let plan = cfg.training_plan()?;
    let train = load_data(data, cfg)?;
    let model_seed = analysis::model_seed(cfg.seed, gamma);
    let (model, rate) = analysis::train_with_plan(&train, gamma, &plan, model_seed)?;
    let file = ModelFile {
        gamma,
        theta: model.theta.clone(),
        meta: ModelMeta {
            n: train.len(),
            schedule: plan.schedule.with_rate(rate),
            tuned: matches!(plan.rate, analysis::RateChoice::Tuned { .. }),
            batch_size: plan.batch_size,
            epochs: plan.epochs,
            projection_radius: plan.projection_radius,
            seed: model_seed,
        },
    };
    let path = output.unwrap_or_else(|| cfg.out.join(format!("model_{gamma}.json")));
    prepare_output(&path)?;
    write_json(&path, &file)?;
    println!("wrote {} (gamma = {gamma}, rate = {rate}, theta = {:?})", path.display(), model.theta);
    Ok(())
}

fn output_parent_missing(path: &Path) -> bool {
    path.parent().is_some_and(|p| !p.as_os_str().is_empty() && !p.exists())
}

fn prepare_output(path: &Path) -> CliResult<()> {
    if output_parent_missing(path) {
        let parent = path.parent().expect("checked above");
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(())
}

pub fn calibrate(
    cfg: &RunConfig,
    data: &Path,
    alpha: f64,
    models: &ModelArgs,
    output: Option<PathBuf>,
) -> CliResult<()> {
    let cal = load_data(data, cfg)?;
    conformal_quantile_index(cal.len(), alpha)?;
    let (method, result) = match load_models(models, alpha)? {
        Loaded::Cqr(pair) => (Method::Cqr, conformal::cqr_calibrate(&pair, &cal)?),
        Loaded::Cmr(model) => (Method::Cmr, conformal::cmr_calibrate(&model, &cal, alpha)?),
    };
    let file = CalibrationFile { method, alpha, m: result.m, k: result.k, q_hat: result.q_hat };
    let path = or_default(output, cfg, "calibration.json");
    prepare_output(&path)?;
    write_json(&path, &file)?;
    println!("wrote {} (method = {method}, m = {}, q_hat = {})", path.display(), file.m, file.q_hat);
    Ok(())
}

pub fn predict(
    cfg: &RunConfig,
    data: &Path,
    calibration: &Path,
    models: &ModelArgs,
    output: Option<PathBuf>,
) -> CliResult<()> {
    let cal: CalibrationFile = read_json(calibration)?;
    let loaded = load_models(models, cal.alpha)?;
    match (&loaded, cal.method) {
        (Loaded::Cqr(_), Method::Cqr) | (Loaded::Cmr(_), Method::Cmr) => {}
        _ => {
            return Err(CliError::Config(format!(
                "{} was produced by {} calibration but other models were given",
                calibration.display(),
                cal.method
            )))
        }
    }
    let test = load_data(data, cfg)?;
    let intervals = test
        .iter()
        .map(|s| match &loaded {
            Loaded::Cqr(pair) => conformal::cqr_interval(pair, cal.q_hat, &s.x),
            Loaded::Cmr(model) => conformal::cmr_interval(model, cal.q_hat, &s.x),
        })
        .collect::<cqr_core::Result<Vec<PredictionInterval>>>()?;

    let path = or_default(output, cfg, "predictions.csv");
    prepare_output(&path)?;
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| CliError::io(&path, e);
    writeln!(w, "row,lo,hi,empty,y,covered").map_err(io)?;
    for (i, (c, s)) in intervals.iter().zip(&test).enumerate() {
        if c.empty {
            writeln!(w, "{i},,,true,{},false", s.y).map_err(io)?;
        } else {
            writeln!(w, "{i},{},{},false,{},{}", c.lo, c.hi, s.y, c.contains(s.y)).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;

    let cov = conformal::coverage(&intervals, &test.labels())?;
    let mean_len = intervals.iter().map(PredictionInterval::length).sum::<f64>() / intervals.len() as f64;
    let empty = intervals.iter().filter(|c| c.empty).count();
    println!(
        "wrote {} ({} rows, coverage = {cov:.4}, mean length = {mean_len:.4}, empty = {empty})",
        path.display(),
        intervals.len()
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> CliResult<()> {
    let plan = cfg.sweep_plan()?;
    let spec = cfg.synthetic_spec()?;
    let out = analysis::run_sweep(&plan, &spec, cfg.workers)?;
    for s in &out.skipped {
        eprintln!(
            "skipped n = {}, m = {}, alpha = {}, trial = {}: {}",
            s.cell.n, s.cell.m, s.cell.alpha, s.cell.trial, s.reason
        );
    }
    ensure_out(cfg)?;
    let path = cfg.out.join("records.csv");
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    analysis::write_records_csv(BufWriter::new(file), &out.records)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    println!("wrote {} ({} records, {} skipped)", path.display(), out.records.len(), out.skipped.len());
    Ok(())
}

/// What `fit` regresses `Δ` against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FitAgainst {
    /// `ln Δ` on `ln n`, per `(method, m, α)`, plus intercepts on `ln α`.
    N,
    /// `ln Δ` on `ln m`, per `(method, n, α)`.
    M,
    /// Pooled `ln Δ` on `ln(1/(n α²))` over the chosen α values.
    InvNalpha2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupFit {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(flatten)]
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub against: &'static str,
    pub fits: Vec<GroupFit>,
    /// Per-α intercepts regressed on `ln α`, one entry per `(method, m)`
    /// with at least two α values.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub intercepts_vs_log_alpha: Vec<GroupFit>,
}

fn distinct<T: PartialEq + Copy>(values: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

pub fn fit(
    cfg: &RunConfig,
    records_path: &Path,
    against: FitAgainst,
    alphas: &[f64],
    output: Option<PathBuf>,
) -> CliResult<()> {
    let file = File::open(records_path).map_err(|e| CliError::io(records_path, e))?;
    let records = analysis::read_records_csv(file).map_err(reading(records_path))?;
    if records.is_empty() {
        return Err(CliError::Data(format!("{}: no records", records_path.display())));
    }
    let methods = distinct(records.iter().map(|r| r.method));
    let mut summary = FitSummary {
        against: match against {
            FitAgainst::N => "n",
            FitAgainst::M => "m",
            FitAgainst::InvNalpha2 => "inv-nalpha2",
        },
        fits: Vec::new(),
        intercepts_vs_log_alpha: Vec::new(),
    };
    for method in methods {
        let recs: Vec<ExperimentRecord> = records.iter().filter(|r| r.method == method).cloned().collect();
        match against {
            FitAgainst::N => {
                for m in distinct(recs.iter().map(|r| r.m)) {
                    let mut per_alpha = Vec::new();
                    for alpha in distinct(recs.iter().filter(|r| r.m == m).map(|r| r.alpha)) {
                        let ns = distinct(recs.iter().filter(|r| r.m == m && r.alpha == alpha).map(|r| r.n));
                        if ns.len() < 2 {
                            continue;
                        }
                        let fit = analysis::slope_vs_n(&recs, alpha, m).map_err(reading(records_path))?;
                        per_alpha.push((alpha, fit));
                        summary.fits.push(GroupFit {
                            method: Some(method),
                            alpha: Some(alpha),
                            n: None,
                            m: Some(m),
                            fit,
                        });
                    }
                    if per_alpha.len() >= 2 {
                        let fit = analysis::intercepts_vs_alpha(&per_alpha).map_err(reading(records_path))?;
                        summary.intercepts_vs_log_alpha.push(GroupFit {
                            method: Some(method),
                            alpha: None,
                            n: None,
                            m: Some(m),
                            fit,
                        });
                    }
                }
            }
            FitAgainst::M => {
                for n in distinct(recs.iter().map(|r| r.n)) {
                    for alpha in distinct(recs.iter().filter(|r| r.n == n).map(|r| r.alpha)) {
                        let ms = distinct(recs.iter().filter(|r| r.n == n && r.alpha == alpha).map(|r| r.m));
                        if ms.len() < 2 {
                            continue;
                        }
                        let fit = analysis::slope_vs_m(&recs, alpha, n).map_err(reading(records_path))?;
                        summary.fits.push(GroupFit {
                            method: Some(method),
                            alpha: Some(alpha),
                            n: Some(n),
                            m: None,
                            fit,
                        });
                    }
                }
            }
            FitAgainst::InvNalpha2 => {
                let set: Vec<f64> = if alphas.is_empty() { vec![0.01, 0.02, 0.025, 0.03] } else { alphas.to_vec() };
                let fit = analysis::slope_vs_inv_nalpha2(&recs, &set).map_err(reading(records_path))?;
                summary.fits.push(GroupFit { method: Some(method), alpha: None, n: None, m: None, fit });
            }
        }
    }
    if summary.fits.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no group has two or more distinct sizes to fit",
            records_path.display()
        )));
    }
    let path = or_default(output, cfg, "fit.json");
    prepare_output(&path)?;
    write_json(&path, &summary)?;
    for g in &summary.fits {
        println!(
            "slope {:.4} intercept {:.4} r2 {:.4} ({} points){}",
            g.fit.slope,
            g.fit.intercept,
            g.fit.r_squared,
            g.fit.point_count,
            g.alpha.map(|a| format!(" alpha = {a}")).unwrap_or_default()
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub delta: f64,
    pub constants: DistributionSpec,
    pub theory: TheoryConstants,
    pub m_threshold: f64,
    pub m_condition_holds: bool,
    pub cqr: BoundEntry,
    pub cmr: BoundEntry,
    /// High-probability bounds on the lower / upper SGD parameter errors.
    pub sgd_error: (f64, f64),
    pub regime: Regime,
    /// Suggested `(n, m)` split of `n + m` samples.
    pub allocation: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEntry {
    pub terms: BoundTerms,
    pub total: f64,
}

pub fn bounds(cfg: &RunConfig) -> CliResult<()> {
    let spec = cfg.distribution_spec()?;
    let b = &cfg.bounds;
    let n = b.n.unwrap_or(cfg.synth.n);
    let m = b.m.unwrap_or(cfg.synth.m);
    let alpha = b.alpha.unwrap_or(0.1);
    let delta = b.delta.unwrap_or(0.05);
    let theory = bounds::constants(&spec, alpha, n, delta)?;
    let entry = |terms: BoundTerms| BoundEntry { total: terms.total(), terms };
    let report = BoundReport {
        n,
        m,
        alpha,
        delta,
        constants: spec,
        m_threshold: bounds::m_threshold(theory.h, alpha),
        m_condition_holds: bounds::check_m_condition(theory.h, alpha, m),
        cqr: entry(bounds::cqr_bound_terms(&spec, alpha, n, m)?),
        cmr: entry(bounds::cmr_bound_terms(&spec, alpha, n, m)?),
        sgd_error: bounds::sgd_error_bounds(&spec, n)?,
        regime: bounds::classify_regime(n, m, alpha),
        allocation: bounds::allocation_advice(alpha, n + m)?,
        theory,
    };
    if !report.m_condition_holds {
        eprintln!(
            "warning: m = {m} does not exceed 8H/min(alpha, 1-alpha) = {:.1}; the bounds are not guaranteed",
            report.m_threshold
        );
    }
    ensure_out(cfg)?;
    let path = cfg.out.join("bounds.json");
    write_json(&path, &report)?;
    println!(
        "cqr bound {:.6e}, cmr bound {:.6e}, regime {} (wrote {})",
        report.cqr.total,
        report.cmr.total,
        report.regime,
        path.display()
    );
    Ok(())
}
