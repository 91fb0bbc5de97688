//! Projected stochastic subgradient descent on the pinball objective.
//!
//! Iterates `θ_{k+1} = Π_K(θ_k − η_k ĝ_k)` where `ĝ_k` is the mini-batch mean
//! of per-sample pinball subgradients and `Π_K` projects onto the Euclidean
//! ball of radius `K` (skipped when no radius is configured). The iterate
//! starts at the origin and the samples are visited in a seeded permutation,
//! one pass per epoch.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{check_level, dot, norm, pinball_unchecked, subgradient_weight, Dataset, LinearQuantileModel};
use crate::seed;

/// Step-size schedule. `k` counts steps from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "c", rename_all = "kebab-case")]
pub enum Schedule {
    /// `η_k = c / k`
    InverseTime(f64),
    /// `η_k = c`
    Constant(f64),
}

impl Schedule {
    pub fn rate(&self) -> f64 {
        match *self {
            Schedule::InverseTime(c) | Schedule::Constant(c) => c,
        }
    }

    pub fn with_rate(&self, c: f64) -> Schedule {
        match self {
            Schedule::InverseTime(_) => Schedule::InverseTime(c),
            Schedule::Constant(_) => Schedule::Constant(c),
        }
    }

    #[inline]
    pub fn step(&self, k: usize) -> f64 {
        match *self {
            Schedule::InverseTime(c) => c / k as f64,
            Schedule::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    /// Radius of the feasible ball; `None` disables projection.
    pub projection_radius: Option<f64>,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { schedule: Schedule::InverseTime(0.01), batch_size: 64, epochs: 1, projection_radius: None, seed: 0 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self.schedule.rate();
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("learning rate must be positive and finite, got {c}")));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be at least 1"));
        }
        if let Some(k) = self.projection_radius {
            if !(k > 0.0) {
                return Err(invalid(format!("projection radius must be positive, got {k}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_theta: Vec<f64>,
    pub steps: usize,
    /// Mean pinball loss of each mini-batch, evaluated before its update.
    pub mean_batch_loss_trace: Vec<f64>,
}

impl TrainReport {
    pub fn model(&self, gamma: f64) -> Result<LinearQuantileModel> {
        LinearQuantileModel::new(self.final_theta.clone(), gamma)
    }
}

/// Euclidean projection onto the ball of radius `radius`.
pub fn project_ball(theta: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius > 0.0) {
        return Err(invalid(format!("projection radius must be positive, got {radius}")));
    }
    let mut out = theta.to_vec();
    project_in_place(&mut out, radius);
    Ok(out)
}

fn project_in_place(theta: &mut [f64], radius: f64) {
    let n = norm(theta);
    if n > radius {
        let scale = radius / n;
        theta.iter_mut().for_each(|v| *v *= scale);
    }
}

pub fn sgd_train(data: &Dataset, gamma: f64, config: &SgdConfig) -> Result<TrainReport> {
    sgd_train_observed(data, gamma, config, |_, _| {})
}

/// Like [`sgd_train`], calling `observe(k, θ_k)` after every update.
pub fn sgd_train_observed<F>(data: &Dataset, gamma: f64, config: &SgdConfig, mut observe: F) -> Result<TrainReport>
where
    F: FnMut(usize, &[f64]),
{
    data.require_nonempty("training")?;
    check_level(gamma)?;
    config.validate()?;

    let n = data.len();
    let d = data.dim();
    let samples = data.samples();
    let mut rng = seed::rng(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut theta = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let mut trace = Vec::with_capacity(batches_per_epoch * config.epochs);
    let mut k = 0usize;

    // ⌈n/b⌉ batches whose sizes differ by at most one, so no step rests on
    // a tiny remainder batch.
    let (base, extra) = (n / batches_per_epoch, n % batches_per_epoch);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut start = 0;
        for j in 0..batches_per_epoch {
            let len = base + usize::from(j < extra);
            let batch = &order[start..start + len];
            start += len;
            k += 1;
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for &i in batch {
                let s = &samples[i];
                let t = dot(&theta, &s.x);
                loss += pinball_unchecked(t, s.y, gamma);
                let w = subgradient_weight(t, s.y, gamma);
                grad.iter_mut().zip(&s.x).for_each(|(g, xj)| *g += w * xj);
            }
            let scale = config.schedule.step(k) / batch.len() as f64;
            theta.iter_mut().zip(&grad).for_each(|(th, g)| *th -= scale * g);
            if let Some(radius) = config.projection_radius {
                project_in_place(&mut theta, radius);
            }
            trace.push(loss / batch.len() as f64);
            observe(k, &theta);
        }
    }

    Ok(TrainReport { final_theta: theta, steps: k, mean_batch_loss_trace: trace })
}

/// `count` log-spaced rates covering `[low, high]`.
pub fn log_grid(low: f64, high: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![low],
        _ => {
            let (a, b) = (low.log10(), high.log10());
            (0..count).map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)).collect()
        }
    }
}

/// Number of rates in [`default_rate_grid`]: adjacent rates differ by ~2×.
pub const DEFAULT_GRID_POINTS: usize = 17;

/// The default tuning grid: log-spaced rates in `[1e-5, 1]`.
pub fn default_rate_grid() -> Vec<f64> {
    log_grid(1e-5, 1.0, DEFAULT_GRID_POINTS)
}

/// Fraction of the data held out to score arms during tuning.
pub const TUNE_HOLDOUT_FRACTION: f64 = 0.2;

/// Deterministic (fit, held-out) split used by the tuner.
pub fn tuning_split(data: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    if data.len() < 2 {
        return Err(invalid("tuning needs at least two samples"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, &[0])));
    let held = ((data.len() as f64 * TUNE_HOLDOUT_FRACTION).round() as usize).clamp(1, data.len() - 1);
    let (held_idx, fit_idx) = order.split_at(held);
    Ok((data.select(fit_idx), data.select(held_idx)))
}

fn holdout_loss(theta: &[f64], held: &Dataset, gamma: f64) -> f64 {
    let total: f64 = held.iter().map(|s| pinball_unchecked(dot(theta, &s.x), s.y, gamma)).sum();
    let mean = total / held.len() as f64;
    if mean.is_finite() {
        mean
    } else {
        f64::INFINITY
    }
}

/// Successive-halving selection of the learning rate, with the default
/// template (inverse-time schedule, batch 64, one epoch, no projection).
pub fn successive_halving_tune(data: &Dataset, gamma: f64, grid: &[f64], budget: usize, seed: u64) -> Result<f64> {
    successive_halving_tune_with(data, gamma, grid, budget, seed, &SgdConfig::default())
}

/// Successive halving over `grid` using `template` for everything but the rate.
///
/// The data is split into a fit part and a held-out part. Round `r` of `R =
/// ⌈log₂ |grid|⌉` trains every surviving arm on the first
/// `max(budget, N_fit / 2^(R-1-r))` fit samples, scores it by held-out mean
/// pinball loss and keeps the better half (rounded up). Ties go to the arm
/// listed first, which is the smaller rate for an ascending grid.
pub fn successive_halving_tune_with(
    data: &Dataset,
    gamma: f64,
    grid: &[f64],
    budget: usize,
    seed: u64,
    template: &SgdConfig,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(invalid("learning-rate grid is empty"));
    }
    if budget == 0 {
        return Err(invalid("tuning budget must be at least 1"));
    }
    if grid.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(invalid("learning rates must be positive and finite"));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("learning-rate grid must be sorted ascending"));
    }
    check_level(gamma)?;
    if grid.len() == 1 {
        return Ok(grid[0]);
    }

    let (fit, held) = tuning_split(data, seed)?;
    let rounds = usize::BITS - (grid.len() - 1).leading_zeros();
    let mut alive: Vec<usize> = (0..grid.len()).collect();
    for r in 0..rounds {
        let shift = rounds - 1 - r;
        let size = (fit.len() >> shift).max(budget).min(fit.len());
        let subset = fit.head(size);
        let config = SgdConfig { seed: seed::derive(seed, &[1, r as u64]), ..template.clone() };
        let mut scored: Vec<(f64, usize)> = alive
            .par_iter()
            .map(|&arm| {
                let cfg = SgdConfig { schedule: config.schedule.with_rate(grid[arm]), ..config.clone() };
                let loss = sgd_train(&subset, gamma, &cfg)
                    .map(|rep| holdout_loss(&rep.final_theta, &held, gamma))
                    .unwrap_or(f64::INFINITY);
                (loss, arm)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.truncate(scored.len().div_ceil(2));
        alive = scored.into_iter().map(|(_, arm)| arm).collect();
        if alive.len() == 1 {
            break;
        }
    }
    // Should already be a single arm; keep the best-ranked if not.
    Ok(grid[alive[0]])
}
