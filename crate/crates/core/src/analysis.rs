//! Monte-Carlo sweeps over `(n, m, α)` and the log-log regressions used to
//! read off scaling exponents of the length deviation.
//!
//! Every cell derives its own seed from the master seed and its coordinates,
//! so a sweep produces the same records for any worker count or order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{classify_regime, Regime};
use crate::conformal::{
    calibrate, cmr_interval, cmr_score, coverage, cqr_interval, cqr_score, length_deviation, CqrModelPair,
    PredictionInterval,
};
use crate::error::{invalid, Error, Result};
use crate::model::{Dataset, LinearQuantileModel};
use crate::optimizer::{default_rate_grid, sgd_train, successive_halving_tune_with, Schedule, SgdConfig};
use crate::seed::{self, stream};
use crate::synth::{oracle_interval_length, oracle_model, sample, SyntheticSpec};

/// Miscoverage levels of the main synthetic study.
pub const ALPHA_GRID: [f64; 9] = [0.01, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cqr,
    Cmr,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Cqr => "cqr",
            Method::Cmr => "cmr",
        }
    }

    fn key(&self) -> u64 {
        match self {
            Method::Cqr => 0,
            Method::Cmr => 1,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cqr" => Ok(Method::Cqr),
            "cmr" => Ok(Method::Cmr),
            other => Err(invalid(format!("unknown method {other:?}"))),
        }
    }
}

/// Whether models are trained or set to the oracle parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    Trained,
    OracleTheta,
}

/// How the SGD step size is chosen for each trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateChoice {
    Fixed {
        rate: f64,
    },
    /// Successive halving on the cell's training data.
    Tuned {
        grid: Vec<f64>,
        budget: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    /// Schedule shape; its rate is replaced by `rate`.
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub projection_radius: Option<f64>,
    pub rate: RateChoice,
}

impl Default for TrainingPlan {
    fn default() -> Self {
        Self {
            // 1/k decay from θ = 0 overshoots badly at extreme quantile
            // levels for any c in the tuning range; a tuned constant rate
            // does not.
            schedule: Schedule::Constant(1.0),
            batch_size: 64,
            epochs: 1,
            projection_radius: None,
            rate: RateChoice::Tuned { grid: default_rate_grid(), budget: 64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub method: Method,
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub trials: usize,
    pub test_size: usize,
    pub master_seed: u64,
    pub oracle_mode: OracleMode,
    pub training: TrainingPlan,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            method: Method::Cqr,
            n_grid: default_n_grid(),
            m_grid: vec![5000],
            alpha_grid: ALPHA_GRID.to_vec(),
            trials: 20,
            test_size: 2000,
            master_seed: 0,
            oracle_mode: OracleMode::Trained,
            training: TrainingPlan::default(),
        }
    }
}

/// `count` integers log-spaced over `[low, high]`, rounded and deduplicated.
pub fn log_spaced_sizes(low: usize, high: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> =
        crate::optimizer::log_grid(low as f64, high as f64, count).into_iter().map(|v| v.round() as usize).collect();
    out.dedup();
    out
}

/// Eight log-spaced training sizes in `[200, 20000]`.
pub fn default_n_grid() -> Vec<usize> {
    log_spaced_sizes(200, 20_000, 8)
}

/// Eight log-spaced calibration sizes in `[100, 3000]`.
pub fn default_m_grid() -> Vec<usize> {
    log_spaced_sizes(100, 3000, 8)
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.m_grid.is_empty() || self.alpha_grid.is_empty() {
            return Err(invalid("sweep grids must be nonempty"));
        }
        if self.trials == 0 || self.test_size == 0 {
            return Err(invalid("trials and test_size must be at least 1"));
        }
        if self.n_grid.contains(&0) || self.m_grid.contains(&0) {
            return Err(invalid("grid sizes must be positive"));
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(**a > 0.0 && **a <= 0.5)) {
            return Err(invalid(format!("alpha {a} is not in (0, 1/2]")));
        }
        Ok(())
    }

    /// All cells in a fixed order: n, then m, then α, then trial.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n_grid {
            for &m in &self.m_grid {
                for (alpha_index, &alpha) in self.alpha_grid.iter().enumerate() {
                    for trial in 0..self.trials {
                        out.push(Cell { method: self.method, n, m, alpha, alpha_index, trial });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub alpha_index: usize,
    pub trial: usize,
}

impl Cell {
    pub fn seed(&self, master_seed: u64) -> u64 {
        seed::derive(
            master_seed,
            &[self.method.key(), self.n as u64, self.m as u64, self.alpha_index as u64, self.trial as u64],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub trial: usize,
    /// Mean `| |C(x)| − |C*(x)| |` over the test points.
    pub delta: f64,
    pub coverage: f64,
    pub mean_length: f64,
    pub q_hat: f64,
    pub regime: Regime,
    pub seed: u64,
    /// Fraction of test points where the upper quantile estimate is below
    /// the lower one (always 0 for CMR). Not part of the CSV schema.
    #[serde(skip)]
    pub crossing_rate: f64,
}

/// A cell that could not be run, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCell {
    pub cell: Cell,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub records: Vec<ExperimentRecord>,
    pub skipped: Vec<SkippedCell>,
}

enum Fitted {
    Cqr(CqrModelPair),
    Cmr(LinearQuantileModel),
}

/// Seed for a standalone model at level `gamma` under a master seed.
pub fn model_seed(master_seed: u64, gamma: f64) -> u64 {
    seed::derive(master_seed, &[stream::SGD_MEDIAN, gamma.to_bits()])
}

/// Trains one model under `plan`. The SGD and tuner streams are both
/// derived from `seed`. Returns the model and the rate it was trained with.
pub fn train_with_plan(
    data: &Dataset,
    gamma: f64,
    plan: &TrainingPlan,
    seed: u64,
) -> Result<(LinearQuantileModel, f64)> {
    let template = SgdConfig {
        schedule: plan.schedule,
        batch_size: plan.batch_size,
        epochs: plan.epochs,
        projection_radius: plan.projection_radius,
        seed: seed::derive(seed, &[0]),
    };
    let rate = match &plan.rate {
        RateChoice::Fixed { rate } => *rate,
        RateChoice::Tuned { grid, budget } => {
            successive_halving_tune_with(data, gamma, grid, *budget, seed::derive(seed, &[stream::TUNE]), &template)?
        }
    };
    let config = SgdConfig { schedule: plan.schedule.with_rate(rate), ..template };
    Ok((sgd_train(data, gamma, &config)?.model(gamma)?, rate))
}

fn fit_models(cell: &Cell, plan: &SweepPlan, spec: &SyntheticSpec, cell_seed: u64) -> Result<Fitted> {
    let alpha = cell.alpha;
    let gammas = match cell.method {
        Method::Cqr => vec![(alpha / 2.0, stream::SGD_LOWER), (1.0 - alpha / 2.0, stream::SGD_UPPER)],
        Method::Cmr => vec![(0.5, stream::SGD_MEDIAN)],
    };
    let models: Vec<LinearQuantileModel> = match plan.oracle_mode {
        OracleMode::OracleTheta => gammas.iter().map(|&(g, _)| oracle_model(spec, g)).collect::<Result<_>>()?,
        OracleMode::Trained => {
            let train = sample(spec, cell.n, seed::derive(cell_seed, &[stream::TRAIN]))?;
            gammas
                .iter()
                .map(|&(g, tag)| {
                    train_with_plan(&train, g, &plan.training, seed::derive(cell_seed, &[tag])).map(|(model, _)| model)
                })
                .collect::<Result<_>>()?
        }
    };
    let mut it = models.into_iter();
    Ok(match cell.method {
        Method::Cqr => {
            let lower = it.next().expect("two models");
            let upper = it.next().expect("two models");
            Fitted::Cqr(CqrModelPair::new(lower, upper, alpha)?)
        }
        Method::Cmr => Fitted::Cmr(it.next().expect("one model")),
    })
}

/// Runs one `(n, m, α, trial)` cell of the synthetic pipeline: sample,
/// train (or take the oracle parameters), calibrate, evaluate on test data.
pub fn run_cell(cell: &Cell, plan: &SweepPlan, spec: &SyntheticSpec) -> Result<ExperimentRecord> {
    let cell_seed = cell.seed(plan.master_seed);
    // fail fast on infeasible calibration before any training
    crate::conformal::conformal_quantile_index(cell.m, cell.alpha)?;
    let fitted = fit_models(cell, plan, spec, cell_seed)?;

    let cal = sample(spec, cell.m, seed::derive(cell_seed, &[stream::CALIBRATION]))?;
    let scores = cal
        .iter()
        .map(|s| match &fitted {
            Fitted::Cqr(pair) => cqr_score(pair, &s.x, s.y),
            Fitted::Cmr(model) => cmr_score(model, &s.x, s.y),
        })
        .collect::<Result<Vec<_>>>()?;
    let q_hat = calibrate(&scores, cell.alpha)?.q_hat;

    let test = sample(spec, plan.test_size, seed::derive(cell_seed, &[stream::TEST]))?;
    let mut intervals = Vec::with_capacity(test.len());
    let mut oracle = Vec::with_capacity(test.len());
    let mut crossings = 0usize;
    for s in &test {
        let c = match &fitted {
            Fitted::Cqr(pair) => {
                let (lo, hi) = pair.band(&s.x)?;
                if hi < lo {
                    crossings += 1;
                }
                cqr_interval(pair, q_hat, &s.x)?
            }
            Fitted::Cmr(model) => cmr_interval(model, q_hat.max(0.0), &s.x)?,
        };
        intervals.push(c);
        oracle.push(oracle_interval_length(spec, &s.x, cell.alpha)?);
    }
    let delta = length_deviation(&intervals, &oracle)?;
    let cov = coverage(&intervals, &test.labels())?;
    let mean_length = intervals.iter().map(PredictionInterval::length).sum::<f64>() / intervals.len() as f64;

    Ok(ExperimentRecord {
        method: cell.method,
        n: cell.n,
        m: cell.m,
        alpha: cell.alpha,
        trial: cell.trial,
        delta,
        coverage: cov,
        mean_length,
        q_hat,
        regime: classify_regime(cell.n, cell.m, cell.alpha),
        seed: cell_seed,
        crossing_rate: crossings as f64 / test.len() as f64,
    })
}

/// Runs every cell of `plan` on `workers` threads (0 = rayon default).
/// Infeasible calibrations are skipped and reported; other errors abort.
pub fn run_sweep(plan: &SweepPlan, spec: &SyntheticSpec, workers: usize) -> Result<SweepOutput> {
    plan.validate()?;
    let cells = plan.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<ExperimentRecord>> =
        pool.install(|| cells.par_iter().map(|c| run_cell(c, plan, spec)).collect());
    let mut out = SweepOutput::default();
    for (cell, res) in cells.into_iter().zip(results) {
        match res {
            Ok(r) => out.records.push(r),
            Err(e @ Error::CalibrationInfeasible { .. }) => {
                out.skipped.push(SkippedCell { cell, reason: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Mean `delta` over trials, keyed by `(n, m, α)` in the order of `records`.
pub fn mean_delta_by_cell(records: &[ExperimentRecord]) -> Vec<((usize, usize, f64), f64)> {
    let mut acc: BTreeMap<(usize, usize, u64), (f64, usize, f64)> = BTreeMap::new();
    for r in records {
        let e = acc.entry((r.n, r.m, r.alpha.to_bits())).or_insert((0.0, 0, r.alpha));
        e.0 += r.delta;
        e.1 += 1;
    }
    acc.into_iter().map(|((n, m, _), (sum, cnt, alpha))| ((n, m, alpha), sum / cnt as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub point_count: usize,
}

/// Ordinary least squares `v ≈ slope·u + intercept`.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(invalid("need at least two points to fit a line"));
    }
    if points.iter().any(|(u, v)| !(u.is_finite() && v.is_finite())) {
        return Err(invalid("fit points must be finite"));
    }
    let n = points.len() as f64;
    let mu = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    for (u, v) in points {
        suu += (u - mu) * (u - mu);
        suv += (u - mu) * (v - mv);
        svv += (v - mv) * (v - mv);
    }
    if suu == 0.0 {
        return Err(invalid("all abscissae are equal"));
    }
    let slope = suv / suu;
    let intercept = mv - slope * mu;
    let r_squared = if svv == 0.0 { 1.0 } else { (suv * suv / (suu * svv)).clamp(0.0, 1.0) };
    Ok(FitResult { slope, intercept, r_squared, point_count: points.len() })
}

/// OLS of `ln v` on `ln u`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.iter().any(|(u, v)| !(*u > 0.0 && *v > 0.0)) {
        return Err(invalid("log-log fit needs strictly positive values"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(u, v)| (u.ln(), v.ln())).collect();
    fit_linear(&logs)
}

fn same_alpha(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

/// Fits `ln Δ̄ ~ a₁ ln n + a₂` at fixed `(α, m)`, with `Δ̄` the trial mean.
pub fn slope_vs_n(records: &[ExperimentRecord], alpha: f64, m_fixed: usize) -> Result<FitResult> {
    let points: Vec<(f64, f64)> = mean_delta_by_cell(records)
        .into_iter()
        .filter(|((_, m, a), _)| *m == m_fixed && same_alpha(*a, alpha))
        .map(|((n, _, _), d)| (n as f64, d))
        .collect();
    if points.is_empty() {
        return Err(invalid(format!("no records at alpha = {alpha}, m = {m_fixed}")));
    }
    fit_loglog(&points)
}

/// Fits `ln Δ̄ ~ slope·ln m + c` at fixed `(α, n)`.
pub fn slope_vs_m(records: &[ExperimentRecord], alpha: f64, n_fixed: usize) -> Result<FitResult> {
    let points: Vec<(f64, f64)> = mean_delta_by_cell(records)
        .into_iter()
        .filter(|((n, _, a), _)| *n == n_fixed && same_alpha(*a, alpha))
        .map(|((_, m, _), d)| (m as f64, d))
        .collect();
    if points.is_empty() {
        return Err(invalid(format!("no records at alpha = {alpha}, n = {n_fixed}")));
    }
    fit_loglog(&points)
}

/// Regresses per-α intercepts `a₂` on `ln α`: `a₂ ~ b₁ ln α + b₂`.
pub fn intercepts_vs_alpha(fits: &[(f64, FitResult)]) -> Result<FitResult> {
    if fits.is_empty() {
        return Err(invalid("no per-alpha fits"));
    }
    if fits.iter().any(|(a, _)| !(*a > 0.0)) {
        return Err(invalid("alpha must be positive"));
    }
    let points: Vec<(f64, f64)> = fits.iter().map(|(a, f)| (a.ln(), f.intercept)).collect();
    fit_linear(&points)
}

/// Pooled fit of `ln Δ̄` on `ln(1/(n α²))` over the given α values.
pub fn slope_vs_inv_nalpha2(records: &[ExperimentRecord], alpha_set: &[f64]) -> Result<FitResult> {
    let points: Vec<(f64, f64)> = mean_delta_by_cell(records)
        .into_iter()
        .filter(|((_, _, a), _)| alpha_set.iter().any(|s| same_alpha(*s, *a)))
        .map(|((n, _, a), d)| (1.0 / (n as f64 * a * a), d))
        .collect();
    if points.is_empty() {
        return Err(invalid("no records match the requested alpha set"));
    }
    fit_loglog(&points)
}

/// Per-α slope fits against `n` at fixed `m`, for every α present.
pub fn per_alpha_fits(records: &[ExperimentRecord], m_fixed: usize) -> Result<Vec<(f64, FitResult)>> {
    let mut alphas: Vec<f64> = records.iter().filter(|r| r.m == m_fixed).map(|r| r.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup_by(|a, b| same_alpha(*a, *b));
    alphas.into_iter().map(|a| Ok((a, slope_vs_n(records, a, m_fixed)?))).collect()
}

pub const RECORD_COLUMNS: [&str; 11] =
    ["method", "n", "m", "alpha", "trial", "delta", "coverage", "mean_length", "q_hat", "regime", "seed"];

pub fn write_records_csv<W: Write>(out: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            r.method.label().to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.alpha.to_string(),
            r.trial.to_string(),
            r.delta.to_string(),
            r.coverage.to_string(),
            r.mean_length.to_string(),
            r.q_hat.to_string(),
            r.regime.label().to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().map(str::trim).ne(RECORD_COLUMNS.iter().copied()) {
        return Err(Error::Schema(format!("records header must be {}", RECORD_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        let bad = |what: &str| Error::Row { line, message: format!("cannot parse {what}") };
        let num = |i: usize| get(i).parse::<f64>().map_err(|_| bad(RECORD_COLUMNS[i]));
        let int = |i: usize| get(i).parse::<usize>().map_err(|_| bad(RECORD_COLUMNS[i]));
        out.push(ExperimentRecord {
            method: get(0).parse().map_err(|_| bad("method"))?,
            n: int(1)?,
            m: int(2)?,
            alpha: num(3)?,
            trial: int(4)?,
            delta: num(5)?,
            coverage: num(6)?,
            mean_length: num(7)?,
            q_hat: num(8)?,
            regime: get(9).parse().map_err(|_| bad("regime"))?,
            seed: get(10).parse().map_err(|_| bad("seed"))?,
            crossing_rate: 0.0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_exact_power_laws() {
        let pts: Vec<(f64, f64)> = (1..=8).map(|i| (10f64 * i as f64, 1.0 / (10.0 * i as f64))).collect();
        let f = fit_loglog(&pts).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let c = 3.7;
        let pts: Vec<(f64, f64)> = [2.0, 5.0, 11.0, 40.0].iter().map(|&u: &f64| (u, c / u.sqrt())).collect();
        let f = fit_loglog(&pts).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - c.ln()).abs() < 1e-12);
    }

    #[test]
    fn fit_duplicate_abscissae() {
        // normal equations: the fit passes through the mean of v at each u
        let pts = [(1.0, 1.0), (1.0, 3.0), (2.0, 5.0), (2.0, 7.0)];
        let f = fit_linear(&pts).unwrap();
        assert!((f.slope - 4.0).abs() < 1e-12);
        assert!((f.intercept - -2.0).abs() < 1e-12);
        assert_eq!(f.point_count, 4);
    }

    #[test]
    fn fit_errors() {
        assert!(fit_loglog(&[(1.0, 1.0)]).is_err());
        assert!(fit_loglog(&[(1.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(fit_loglog(&[(1.0, 1.0), (2.0, -2.0)]).is_err());
        assert!(fit_linear(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn default_grids() {
        let n = default_n_grid();
        assert_eq!(n.len(), 8);
        assert_eq!((n[0], n[7]), (200, 20_000));
        let m = default_m_grid();
        assert_eq!((m[0], m[7], m.len()), (100, 3000, 8));
    }

    fn record(n: usize, m: usize, alpha: f64, trial: usize, delta: f64) -> ExperimentRecord {
        ExperimentRecord {
            method: Method::Cqr,
            n,
            m,
            alpha,
            trial,
            delta,
            coverage: 0.9,
            mean_length: 1.0,
            q_hat: 0.1,
            regime: classify_regime(n, m, alpha),
            seed: 1,
            crossing_rate: 0.0,
        }
    }

    #[test]
    fn slope_helpers_average_trials() {
        let mut recs = Vec::new();
        for &n in &[100usize, 1000, 10_000] {
            for &a in &[0.05, 0.1] {
                // trials average to 1/(n a²)
                let target = 1.0 / (n as f64 * a * a);
                recs.push(record(n, 500, a, 0, 0.5 * target));
                recs.push(record(n, 500, a, 1, 1.5 * target));
            }
        }
        let f = slope_vs_n(&recs, 0.1, 500).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        let fits = per_alpha_fits(&recs, 500).unwrap();
        let b = intercepts_vs_alpha(&fits).unwrap();
        assert!((b.slope + 2.0).abs() < 1e-12);
        let g = slope_vs_inv_nalpha2(&recs, &[0.05, 0.1]).unwrap();
        assert!((g.slope - 1.0).abs() < 1e-12);
        assert!(slope_vs_n(&recs, 0.3, 500).is_err());
    }

    #[test]
    fn records_csv_round_trip() {
        let recs = vec![record(200, 100, 0.1, 0, 0.123456789012345), record(400, 100, 0.025, 3, 1e-7)];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("method,n,m,alpha,trial,delta,coverage,mean_length,q_hat,regime,seed\n"));
        assert_eq!(read_records_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn cell_seeds_depend_on_every_coordinate() {
        let base = Cell { method: Method::Cqr, n: 200, m: 100, alpha: 0.1, alpha_index: 4, trial: 0 };
        let s = base.seed(7);
        assert_ne!(s, Cell { trial: 1, ..base }.seed(7));
        assert_ne!(s, Cell { n: 201, ..base }.seed(7));
        assert_ne!(s, Cell { m: 101, ..base }.seed(7));
        assert_ne!(s, Cell { alpha_index: 5, ..base }.seed(7));
        assert_ne!(s, Cell { method: Method::Cmr, ..base }.seed(7));
        assert_ne!(s, base.seed(8));
    }

    #[test]
    fn infeasible_cells_are_skipped() {
        let spec = SyntheticSpec::with_theta0([1.5, 1.2]).unwrap();
        let plan = SweepPlan {
            n_grid: vec![200],
            m_grid: vec![9],
            alpha_grid: vec![0.05, 0.5],
            trials: 1,
            test_size: 50,
            oracle_mode: OracleMode::OracleTheta,
            ..Default::default()
        };
        let out = run_sweep(&plan, &spec, 1).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].cell.alpha, 0.05);
    }
}
