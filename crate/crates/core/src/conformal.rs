//! Nonconformity scores, the split-conformal quantile and interval construction.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{check_dims, dot, Dataset, LinearQuantileModel};

/// Lower/upper quantile models for CQR at miscoverage `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqrModelPair {
    pub lower: LinearQuantileModel,
    pub upper: LinearQuantileModel,
    pub alpha: f64,
}

impl CqrModelPair {
    pub fn new(lower: LinearQuantileModel, upper: LinearQuantileModel, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(invalid(format!("CQR needs alpha in (0, 1/2], got {alpha}")));
        }
        let tol = 1e-12;
        if (lower.gamma - alpha / 2.0).abs() > tol || (upper.gamma - (1.0 - alpha / 2.0)).abs() > tol {
            return Err(invalid(format!(
                "model levels ({}, {}) do not match alpha = {alpha}",
                lower.gamma, upper.gamma
            )));
        }
        check_dims(lower.dim(), upper.dim())?;
        Ok(Self { lower, upper, alpha })
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    /// `(t_lo(x), t_hi(x))`
    pub fn band(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dims(self.dim(), x.len())?;
        Ok((dot(&self.lower.theta, x), dot(&self.upper.theta, x)))
    }
}

/// A closed interval `[lo, hi]`, or the empty set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lo: f64,
    pub hi: f64,
    pub empty: bool,
}

impl PredictionInterval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Self { lo, hi, empty: false }
    }

    pub fn empty() -> Self {
        Self { lo: f64::NAN, hi: f64::NAN, empty: true }
    }

    pub fn length(&self) -> f64 {
        if self.empty {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    /// Endpoints are included.
    pub fn contains(&self, y: f64) -> bool {
        !self.empty && self.lo <= y && y <= self.hi
    }
}

/// The calibrated conformal threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub q_hat: f64,
    pub m: usize,
    pub alpha: f64,
    /// 1-based rank of `q_hat` in `scores`.
    pub k: usize,
    pub scores: Vec<f64>,
}

/// `max{t_lo(x) − y, y − t_hi(x)}`
pub fn cqr_score(pair: &CqrModelPair, x: &[f64], y: f64) -> Result<f64> {
    let (lo, hi) = pair.band(x)?;
    Ok((lo - y).max(y - hi))
}

/// `|t_½(x) − y|`
pub fn cmr_score(model: &LinearQuantileModel, x: &[f64], y: f64) -> Result<f64> {
    check_median(model)?;
    Ok((model.predict(x)? - y).abs())
}

fn check_median(model: &LinearQuantileModel) -> Result<()> {
    if (model.gamma - 0.5).abs() > 1e-12 {
        return Err(invalid(format!("CMR needs a median model, got gamma = {}", model.gamma)));
    }
    Ok(())
}

/// The 1-based rank `k = ⌈(1−α)(m+1)⌉` of the conformal threshold.
pub fn conformal_quantile_index(m: usize, alpha: f64) -> Result<usize> {
    if m == 0 {
        return Err(invalid("calibration size must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha {alpha} is not in (0, 1)")));
    }
    let k = ceil_index((1.0 - alpha) * (m as f64 + 1.0));
    if k > m {
        return Err(Error::CalibrationInfeasible { k, m, alpha });
    }
    Ok(k.max(1))
}

/// Ceiling that ignores representation error just above an integer, so that
/// e.g. `0.9 * 100` (stored as `90.00000000000001`) maps to 90.
fn ceil_index(v: f64) -> usize {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.abs().max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

/// Empirical `(1−α)_m` quantile of the calibration scores.
pub fn calibrate(scores: &[f64], alpha: f64) -> Result<CalibrationResult> {
    if scores.is_empty() {
        return Err(invalid("no calibration scores"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid("calibration scores contain NaN"));
    }
    let k = conformal_quantile_index(scores.len(), alpha)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(CalibrationResult { q_hat: sorted[k - 1], m: sorted.len(), alpha, k, scores: sorted })
}

pub fn cqr_calibrate(pair: &CqrModelPair, cal: &Dataset) -> Result<CalibrationResult> {
    cal.require_nonempty("calibration")?;
    let scores = cal.iter().map(|s| cqr_score(pair, &s.x, s.y)).collect::<Result<Vec<_>>>()?;
    calibrate(&scores, pair.alpha)
}

pub fn cmr_calibrate(model: &LinearQuantileModel, cal: &Dataset, alpha: f64) -> Result<CalibrationResult> {
    cal.require_nonempty("calibration")?;
    let scores = cal.iter().map(|s| cmr_score(model, &s.x, s.y)).collect::<Result<Vec<_>>>()?;
    calibrate(&scores, alpha)
}

/// `[t_lo(x) − q̂, t_hi(x) + q̂]`, empty when `t_hi − t_lo + 2q̂ < 0`.
pub fn cqr_interval(pair: &CqrModelPair, q_hat: f64, x: &[f64]) -> Result<PredictionInterval> {
    let (lo, hi) = pair.band(x)?;
    if hi - lo + 2.0 * q_hat >= 0.0 {
        let (a, b) = (lo - q_hat, hi + q_hat);
        // hi − lo + 2q̂ ≥ 0 can round to a − b = tiny positive
        Ok(PredictionInterval::closed(a.min(b), b.max(a)))
    } else {
        Ok(PredictionInterval::empty())
    }
}

/// `[t_½(x) − q̂, t_½(x) + q̂]`
pub fn cmr_interval(model: &LinearQuantileModel, q_hat: f64, x: &[f64]) -> Result<PredictionInterval> {
    if !(q_hat >= 0.0) {
        return Err(invalid(format!("CMR threshold must be nonnegative, got {q_hat}")));
    }
    let t = model.predict(x)?;
    Ok(PredictionInterval::closed(t - q_hat, t + q_hat))
}

/// Fraction of labels that fall inside their interval.
pub fn coverage(intervals: &[PredictionInterval], ys: &[f64]) -> Result<f64> {
    if intervals.len() != ys.len() {
        return Err(invalid(format!("{} intervals but {} labels", intervals.len(), ys.len())));
    }
    if ys.is_empty() {
        return Err(invalid("coverage of an empty set"));
    }
    let hits = intervals.iter().zip(ys).filter(|(c, &y)| c.contains(y)).count();
    Ok(hits as f64 / ys.len() as f64)
}

/// Mean of `| |C(x)| − |C*(x)| |` over test points.
pub fn length_deviation(intervals: &[PredictionInterval], oracle_lengths: &[f64]) -> Result<f64> {
    if intervals.len() != oracle_lengths.len() {
        return Err(invalid(format!("{} intervals but {} oracle lengths", intervals.len(), oracle_lengths.len())));
    }
    if intervals.is_empty() {
        return Err(invalid("length deviation of an empty set"));
    }
    if oracle_lengths.iter().any(|&l| !(l >= 0.0)) {
        return Err(invalid("oracle lengths must be nonnegative"));
    }
    let total: f64 = intervals.iter().zip(oracle_lengths).map(|(c, &o)| (c.length() - o).abs()).sum();
    Ok(total / intervals.len() as f64)
}
