//! Closed-form constants and efficiency bounds for CQR / CMR, plus the
//! classification of `(n, m, α)` into the regime whose term dominates.
//!
//! All evaluators take a [`DistributionSpec`]; nothing here is estimated
//! from data.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::DistributionSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Flatness `f_max / f_min`.
    pub h: f64,
    /// Score bound `2BK + 1/f_min`.
    pub r: f64,
    /// `min{α, 1−α} / (2 f_max)`
    pub beta: f64,
    /// `4 λ_max² f_max d / (λ_min⁴ f_min²)`
    pub a: f64,
    /// `B √(2A / (n δ))`
    pub eps_n: f64,
    pub delta: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha {alpha} is not in (0, 1)")))
    }
}

pub fn constants(spec: &DistributionSpec, alpha: f64, n: usize, delta: f64) -> Result<TheoryConstants> {
    spec.validate()?;
    check_alpha(alpha)?;
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta {delta} is not in (0, 1)")));
    }
    let h = spec.f_max / spec.f_min;
    let r = 2.0 * spec.b * spec.k + 1.0 / spec.f_min;
    let beta = alpha.min(1.0 - alpha) / (2.0 * spec.f_max);
    let a = 4.0 * spec.lambda_max.powi(2) * spec.f_max * spec.d as f64 / (spec.lambda_min.powi(4) * spec.f_min.powi(2));
    let eps_n = spec.b * (2.0 * a / (n as f64 * delta)).sqrt();
    Ok(TheoryConstants { h, r, beta, a, eps_n, delta })
}

/// Sample-size condition `m > 8H / min{α, 1−α}` for the efficiency bounds.
pub fn check_m_condition(h: f64, alpha: f64, m: usize) -> bool {
    m as f64 > m_threshold(h, alpha)
}

pub fn m_threshold(h: f64, alpha: f64) -> f64 {
    8.0 * h / alpha.min(1.0 - alpha)
}

/// Per-term breakdown of an efficiency bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    /// Coefficient times `n^{-1/2}`.
    pub root_n: f64,
    /// Coefficient times `m^{-1/2}`.
    pub root_m: f64,
    /// The `1/(f_min m)`-type term.
    pub inv_m: f64,
    /// The `R·exp(−c α² m)` term.
    pub exp_m: f64,
    /// The `1/(α² n)` term.
    pub inv_alpha2_n: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.root_n + self.root_m + self.inv_m + self.exp_m + self.inv_alpha2_n
    }
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(invalid("n and m must be at least 1"));
    }
    Ok(())
}

fn require_m_condition(spec: &DistributionSpec, alpha: f64, m: usize) -> Result<()> {
    let h = spec.f_max / spec.f_min;
    if check_m_condition(h, alpha, m) {
        Ok(())
    } else {
        Err(Error::PreconditionFailed(format!(
            "m = {m} does not exceed 8H/min(alpha, 1-alpha) = {:.6e}",
            m_threshold(h, alpha)
        )))
    }
}

/// Terms of the explicit CQR length-deviation bound, without checking the
/// sample-size condition.
pub fn cqr_bound_terms(spec: &DistributionSpec, alpha: f64, n: usize, m: usize) -> Result<BoundTerms> {
    spec.validate()?;
    check_alpha(alpha)?;
    check_sizes(n, m)?;
    let DistributionSpec { b, d, lambda_min: lmin, lambda_max: lmax, f_min, f_max, .. } = *spec;
    let d = d as f64;
    let (n, m) = (n as f64, m as f64);
    let r = 2.0 * b * spec.k + 1.0 / f_min;
    let a2 = alpha.min(1.0 - alpha).powi(2);
    let coef = 4.0 * lmax * (f_max * d).sqrt() / (lmin * f_min * lmin.sqrt())
        + 2.0 * b * lmax * (2.0 * f_max * d).sqrt() / (lmin.powi(2) * f_min);
    Ok(BoundTerms {
        root_n: coef / n.sqrt(),
        root_m: std::f64::consts::PI.sqrt() / (2.0 * f_min * 2f64.sqrt()) / m.sqrt(),
        inv_m: 1.0 / (f_min * m),
        exp_m: 4.0 * r * (-a2 * f_min.powi(2) * m / (8.0 * f_max.powi(2))).exp(),
        inv_alpha2_n: 1056.0 * lmax.powi(2) * f_max.powi(3) * b.powi(2) * r / (a2 * lmin.powi(4) * f_min.powi(2) * n),
    })
}

/// Terms of the explicit CMR length-deviation bound, without checking the
/// sample-size condition.
pub fn cmr_bound_terms(spec: &DistributionSpec, alpha: f64, n: usize, m: usize) -> Result<BoundTerms> {
    spec.validate()?;
    check_alpha(alpha)?;
    check_sizes(n, m)?;
    let DistributionSpec { b, d, lambda_min: lmin, lambda_max: lmax, f_min, f_max, .. } = *spec;
    let d = d as f64;
    let (n, m) = (n as f64, m as f64);
    let r = 2.0 * b * spec.k + 1.0 / f_min;
    let a2 = alpha.min(1.0 - alpha).powi(2);
    Ok(BoundTerms {
        root_n: 4.0 * b * lmax * (f_max * d).sqrt() / (lmin.powi(2) * f_min) / n.sqrt(),
        root_m: std::f64::consts::PI.sqrt() / (f_min * (2.0 * m).sqrt()),
        inv_m: 2.0 / (f_min * m),
        exp_m: 8.0 * r * (-f_min.powi(2) * a2 * m / (8.0 * f_max.powi(2))).exp(),
        inv_alpha2_n: 2056.0 * r * lmax.powi(2) * f_max.powi(3) * b.powi(2) * d
            / (lmin.powi(4) * f_min.powi(2) * a2 * n),
    })
}

/// Explicit CQR bound; fails unless `m > 8H/min{α, 1−α}`.
pub fn cqr_bound(spec: &DistributionSpec, alpha: f64, n: usize, m: usize) -> Result<f64> {
    let terms = cqr_bound_terms(spec, alpha, n, m)?;
    require_m_condition(spec, alpha, m)?;
    Ok(terms.total())
}

/// Explicit CMR bound; fails unless `m > 8H/min{α, 1−α}`.
pub fn cmr_bound(spec: &DistributionSpec, alpha: f64, n: usize, m: usize) -> Result<f64> {
    let terms = cmr_bound_terms(spec, alpha, n, m)?;
    require_m_condition(spec, alpha, m)?;
    Ok(terms.total())
}

/// SGD error bounds after `n` samples: `(E[(t(X;θ_n) − t(X;θ*))²], E‖θ_n − θ*‖²)`.
pub fn sgd_error_bounds(spec: &DistributionSpec, n: usize) -> Result<(f64, f64)> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let num = 4.0 * spec.lambda_max.powi(2) * spec.f_max * spec.d as f64;
    let den = spec.f_min.powi(2) * n as f64;
    Ok((num / (spec.lambda_min.powi(3) * den), num / (spec.lambda_min.powi(4) * den)))
}

/// Which term of the bound dominates at `(n, m, α)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `α ≲ max(n^{-1/2}, m^{-1/2})`: the bound does not vanish.
    Vacuous,
    /// `α ≲ n^{-1/4}`: `1/(α² n)` dominates the training error.
    AlphaSquaredN,
    /// `α ≲ √(log m / m)`: the `exp(−α² m)` calibration term dominates.
    ExpM,
    /// `O(n^{-1/2} + m^{-1/2})`.
    Balanced,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::Vacuous => "vacuous",
            Regime::AlphaSquaredN => "alpha-squared-n",
            Regime::ExpM => "exp-m",
            Regime::Balanced => "balanced",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vacuous" => Ok(Regime::Vacuous),
            "alpha-squared-n" => Ok(Regime::AlphaSquaredN),
            "exp-m" => Ok(Regime::ExpM),
            "balanced" => Ok(Regime::Balanced),
            other => Err(invalid(format!("unknown regime {other:?}"))),
        }
    }
}

/// Regime with the default threshold constant `c = 1`.
pub fn classify_regime(n: usize, m: usize, alpha: f64) -> Regime {
    classify_regime_with(n, m, alpha, 1.0)
}

/// Thresholds are `c·max(n^{-1/2}, m^{-1/2})`, `c·n^{-1/4}` and
/// `c·√(ln m / m)`, checked in that order.
pub fn classify_regime_with(n: usize, m: usize, alpha: f64, c: f64) -> Regime {
    let (nf, mf) = (n.max(1) as f64, m.max(1) as f64);
    if alpha <= c * nf.powf(-0.5).max(mf.powf(-0.5)) {
        Regime::Vacuous
    } else if alpha < c * nf.powf(-0.25) {
        Regime::AlphaSquaredN
    } else if alpha < c * (mf.ln() / mf).sqrt() {
        Regime::ExpM
    } else {
        Regime::Balanced
    }
}

/// Suggested `(n, m)` split of `n_total` samples.
///
/// When `α ≥ n^{-1/4}` at the even split the two halves are balanced.
/// Otherwise `n` is the smallest training size whose `⌈α⁴n⁴⌉` reaches the
/// remaining `n_total − n`, so that `m = min(n_total − n, ⌈α⁴n⁴⌉)`.
pub fn allocation_advice(alpha: f64, n_total: usize) -> Result<(usize, usize)> {
    if n_total < 2 {
        return Err(invalid("need at least two samples to split"));
    }
    check_alpha(alpha)?;
    let m_half = n_total / 2;
    let n_half = n_total - m_half;
    if alpha >= (n_half as f64).powf(-0.25) {
        return Ok((n_half, m_half));
    }
    let target = |n: usize| (alpha * n as f64).powi(4).ceil();
    let n = (1..n_total).find(|&n| target(n) >= (n_total - n) as f64).unwrap_or(n_total - 1);
    Ok((n, n_total - n))
}
