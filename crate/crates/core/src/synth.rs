//! Synthetic well-specified distribution with an analytic conditional law.
//!
//! `X ~ Uniform([x_low, x_high]²)`. Given `X = x`, let `s = θ₀ᵀx`. The
//! density of `Y` is symmetric about zero and piecewise affine on five
//! segments of the support `[−y_max, y_max]`, `y_max = θ₀ᵀ(x_high, x_high)`
//! unless an explicit label bound is set:
//!
//! * a plateau of height `(1−α₀)/(2s)` on `[−s, s]` carrying mass `1−α₀`;
//! * on each side two affine tail pieces carrying `α₀/4` each. The first
//!   starts at the plateau height at `s` and ends at a knot; the second runs
//!   from the knot down to the floor `α₀/(8(y_max−s))` at `y_max`.
//!
//! The knot position and height are the unique solution of the two mass
//! constraints. Every quantile in `[α₀/2, 1−α₀/2]` lies on the plateau, so
//! `q_γ(Y|x) = (2γ−1)/(1−α₀)·θ₀ᵀx` and the linear class is well specified.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{dot, Dataset, DistributionSpec, LinearQuantileModel, Sample};
use crate::seed::{self, Rng};

pub const DEFAULT_ALPHA0: f64 = 0.005;
pub const DEFAULT_X_LOW: f64 = 1.0;
pub const DEFAULT_X_HIGH: f64 = 20.0;

/// Relative tolerance used for box-membership and level-range checks.
const EDGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub theta0: [f64; 2],
    pub alpha0: f64,
    pub x_low: f64,
    pub x_high: f64,
    /// Label support bound; defaults to the largest `θ₀ᵀx` over the box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_bound: Option<f64>,
}

impl SyntheticSpec {
    pub fn new(theta0: [f64; 2], alpha0: f64, x_low: f64, x_high: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0 < 0.5) {
            return Err(invalid(format!("alpha0 must lie in (0, 1/2), got {alpha0}")));
        }
        if theta0.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(invalid("theta0 components must be positive"));
        }
        if !(x_low > 0.0 && x_low <= x_high && x_high.is_finite()) {
            return Err(invalid("covariate box must satisfy 0 < x_low <= x_high"));
        }
        Ok(Self { theta0, alpha0, x_low, x_high, y_bound: None })
    }

    /// Default box `[1, 20]²` and `α₀ = 0.005`.
    pub fn with_theta0(theta0: [f64; 2]) -> Result<Self> {
        Self::new(theta0, DEFAULT_ALPHA0, DEFAULT_X_LOW, DEFAULT_X_HIGH)
    }

    /// Draws `θ₀ ~ Uniform([1, 2]²)` from the run seed.
    pub fn from_seed(master_seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(master_seed, &[seed::stream::THETA0]));
        let theta0 = [rng.random_range(1.0..2.0), rng.random_range(1.0..2.0)];
        Self::with_theta0(theta0).expect("default spec is valid")
    }

    /// Covariates fixed at `(c, c)`, so the conditional law (and hence the
    /// oracle half-width) does not depend on `x`.
    /// The label support is `±2 θ₀ᵀx`, so the tails keep a non-degenerate
    /// width.
    pub fn homoscedastic(theta0: [f64; 2], c: f64) -> Result<Self> {
        let spec = Self::new(theta0, DEFAULT_ALPHA0, c, c)?;
        Ok(Self { y_bound: Some(2.0 * c * (theta0[0] + theta0[1])), ..spec })
    }

    pub fn dim(&self) -> usize {
        2
    }

    pub fn y_max(&self) -> f64 {
        self.y_bound.unwrap_or(self.x_high * (self.theta0[0] + self.theta0[1]))
    }

    pub fn y_min(&self) -> f64 {
        -self.y_max()
    }

    /// Largest `‖x‖₂` over the box.
    pub fn covariate_bound(&self) -> f64 {
        self.x_high * std::f64::consts::SQRT_2
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        let tol = EDGE_TOL * self.x_high;
        x.len() == 2 && x.iter().all(|&v| v >= self.x_low - tol && v <= self.x_high + tol)
    }

    fn check_box(&self, x: &[f64]) -> Result<()> {
        if self.in_box(x) {
            Ok(())
        } else {
            Err(invalid(format!("covariate {x:?} is outside [{}, {}]^2", self.x_low, self.x_high)))
        }
    }

    fn profile(&self, x: &[f64]) -> Profile {
        Profile::new(dot(&self.theta0, x), self.y_max(), self.alpha0)
    }

    /// Levels for which the linear class contains the true quantile.
    pub fn well_specified_levels(&self) -> (f64, f64) {
        (self.alpha0 / 2.0, 1.0 - self.alpha0 / 2.0)
    }
}

/// Conditional-law geometry for one value of `s = θ₀ᵀx`, upper half only.
#[derive(Debug, Clone, Copy)]
struct Profile {
    s: f64,
    plateau: f64,
    /// width of the first tail piece
    w: f64,
    knot: f64,
    floor: f64,
    /// total tail length `y_max − s`
    tail: f64,
    alpha0: f64,
}

impl Profile {
    fn new(s: f64, y_max: f64, alpha0: f64) -> Self {
        let plateau = (1.0 - alpha0) / (2.0 * s);
        // At the far corner of the box the tail has zero width; keep it
        // strictly positive so the density stays finite.
        let tail = (y_max - s).max(1e-9 * y_max);
        let floor = alpha0 / (8.0 * tail);
        let a = alpha0 / 2.0;
        // masses: w(p0 + k)/2 = α₀/4 and (L − w)(k + φ)/2 = α₀/4, solved for k
        let qa = tail;
        let qb = tail * plateau + tail * floor - 2.0 * a;
        let qc = tail * plateau * floor - a * (floor + plateau);
        let disc = (qb * qb - 4.0 * qa * qc).sqrt();
        let knot = if qb >= 0.0 { -2.0 * qc / (qb + disc) } else { (-qb + disc) / (2.0 * qa) };
        let w = a / (plateau + knot);
        Self { s, plateau, w, knot, floor, tail, alpha0 }
    }

    fn upper_end(&self) -> f64 {
        self.s + self.tail
    }

    /// Density at `u ≥ 0`.
    fn pdf_abs(&self, u: f64) -> f64 {
        if u <= self.s {
            self.plateau
        } else if u <= self.s + self.w {
            self.plateau + (self.knot - self.plateau) * (u - self.s) / self.w
        } else if u <= self.upper_end() {
            let v = u - self.s - self.w;
            self.knot + (self.floor - self.knot) * v / (self.tail - self.w)
        } else {
            0.0
        }
    }

    /// Mass on `[0, u]` for `u ≥ 0`.
    fn mass_abs(&self, u: f64) -> f64 {
        let central = (1.0 - self.alpha0) / 2.0;
        if u <= self.s {
            self.plateau * u
        } else if u <= self.s + self.w {
            let v = u - self.s;
            central + self.plateau * v + (self.knot - self.plateau) * v * v / (2.0 * self.w)
        } else if u <= self.upper_end() {
            let v = u - self.s - self.w;
            let len = self.tail - self.w;
            central + self.alpha0 / 4.0 + self.knot * v + (self.floor - self.knot) * v * v / (2.0 * len)
        } else {
            0.5
        }
    }

    /// Inverse of [`Self::mass_abs`] on `[0, 1/2]`.
    fn inverse_mass_abs(&self, g: f64) -> f64 {
        let central = (1.0 - self.alpha0) / 2.0;
        let u = if g <= central {
            g / self.plateau
        } else if g <= central + self.alpha0 / 4.0 {
            let slope = (self.knot - self.plateau) / self.w;
            self.s + affine_area_inverse(self.plateau, slope, g - central).clamp(0.0, self.w)
        } else if g < 0.5 {
            let len = self.tail - self.w;
            let slope = (self.floor - self.knot) / len;
            let v = affine_area_inverse(self.knot, slope, g - central - self.alpha0 / 4.0);
            self.s + self.w + v.clamp(0.0, len)
        } else {
            self.upper_end()
        };
        if (self.mass_abs(u) - g).abs() <= 1e-12 {
            u
        } else {
            self.bisect(g)
        }
    }

    fn bisect(&self, g: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, self.upper_end());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.mass_abs(mid) < g {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * self.upper_end() {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    fn sup(&self) -> f64 {
        self.plateau.max(self.knot).max(self.floor)
    }

    fn inf(&self) -> f64 {
        self.plateau.min(self.knot).min(self.floor)
    }
}

/// Solves `d0·v + slope·v²/2 = area` for `v ≥ 0`.
fn affine_area_inverse(d0: f64, slope: f64, area: f64) -> f64 {
    let disc = (d0 * d0 + 2.0 * slope * area).max(0.0).sqrt();
    2.0 * area / (d0 + disc)
}

/// Oracle parameter `θ*(γ) = (2γ−1)/(1−α₀)·θ₀`.
pub fn oracle_theta(spec: &SyntheticSpec, gamma: f64) -> Result<Vec<f64>> {
    let (lo, hi) = spec.well_specified_levels();
    if !(gamma >= lo - EDGE_TOL && gamma <= hi + EDGE_TOL) {
        return Err(invalid(format!("level {gamma} is outside the well-specified range [{lo}, {hi}]")));
    }
    let scale = (2.0 * gamma - 1.0) / (1.0 - spec.alpha0);
    Ok(spec.theta0.iter().map(|t| scale * t).collect())
}

pub fn oracle_model(spec: &SyntheticSpec, gamma: f64) -> Result<LinearQuantileModel> {
    LinearQuantileModel::new(oracle_theta(spec, gamma)?, gamma)
}

/// Length of the oracle interval `[q_{α/2}(Y|x), q_{1−α/2}(Y|x)]`.
pub fn oracle_interval_length(spec: &SyntheticSpec, x: &[f64], alpha: f64) -> Result<f64> {
    spec.check_box(x)?;
    if !(alpha >= spec.alpha0 - EDGE_TOL && alpha <= 0.5) {
        return Err(invalid(format!("alpha {alpha} is outside [alpha0, 1/2]")));
    }
    Ok(2.0 * (1.0 - alpha) / (1.0 - spec.alpha0) * dot(&spec.theta0, x))
}

/// Density of `Y | X = x`.
pub fn conditional_pdf(spec: &SyntheticSpec, x: &[f64], y: f64) -> Result<f64> {
    spec.check_box(x)?;
    if y < spec.y_min() || y > spec.y_max() {
        return Ok(0.0);
    }
    Ok(spec.profile(x).pdf_abs(y.abs()))
}

pub fn conditional_cdf(spec: &SyntheticSpec, x: &[f64], y: f64) -> Result<f64> {
    spec.check_box(x)?;
    let p = spec.profile(x);
    let g = p.mass_abs(y.abs());
    Ok(if y >= 0.0 { 0.5 + g } else { 0.5 - g })
}

/// `inf{u : F(u|x) ≥ γ}` for `γ ∈ [0, 1]`.
pub fn conditional_quantile(spec: &SyntheticSpec, x: &[f64], gamma: f64) -> Result<f64> {
    spec.check_box(x)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid(format!("level {gamma} is not in [0, 1]")));
    }
    let p = spec.profile(x);
    Ok(if gamma >= 0.5 { p.inverse_mass_abs(gamma - 0.5) } else { -p.inverse_mass_abs(0.5 - gamma) })
}

/// Rejection-envelope constant `M = sup_y pdf(y|x)·(y_max − y_min)`.
pub fn envelope_constant(spec: &SyntheticSpec, x: &[f64]) -> Result<f64> {
    spec.check_box(x)?;
    Ok(spec.profile(x).sup() * (spec.y_max() - spec.y_min()))
}

fn draw_label(spec: &SyntheticSpec, p: &Profile, rng: &mut Rng) -> (f64, usize) {
    let (lo, hi) = (spec.y_min(), spec.y_max());
    let sup = p.sup();
    let mut proposals = 0;
    loop {
        proposals += 1;
        let y = rng.random_range(lo..=hi);
        let u: f64 = rng.random();
        if u * sup <= p.pdf_abs(y.abs()) {
            return (y, proposals);
        }
    }
}

/// Draws `count` labels at a fixed covariate; also returns the number of
/// proposals the rejection sampler used.
pub fn sample_labels_at(spec: &SyntheticSpec, x: &[f64], count: usize, seed: u64) -> Result<(Vec<f64>, usize)> {
    spec.check_box(x)?;
    let p = spec.profile(x);
    let mut rng = seed::rng(seed);
    let mut total = 0;
    let ys = (0..count)
        .map(|_| {
            let (y, k) = draw_label(spec, &p, &mut rng);
            total += k;
            y
        })
        .collect();
    Ok((ys, total))
}

/// Draws `count` i.i.d. samples `(X, Y)`.
pub fn sample(spec: &SyntheticSpec, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    let mut rng = seed::rng(seed);
    let samples = (0..count)
        .map(|_| {
            let x = vec![draw_coord(spec, &mut rng), draw_coord(spec, &mut rng)];
            let (y, _) = draw_label(spec, &spec.profile(&x), &mut rng);
            Sample { x, y }
        })
        .collect();
    Dataset::with_dim(2, samples)
}

fn draw_coord(spec: &SyntheticSpec, rng: &mut Rng) -> f64 {
    spec.x_low + (spec.x_high - spec.x_low) * rng.random::<f64>()
}

/// `E[XXᵀ]` for the uniform box, in closed form.
pub fn second_moment(spec: &SyntheticSpec) -> [[f64; 2]; 2] {
    let (a, b) = (spec.x_low, spec.x_high);
    let (sq, mean) = if b > a { ((b.powi(3) - a.powi(3)) / (3.0 * (b - a)), 0.5 * (a + b)) } else { (a * a, a) };
    let cross = mean * mean;
    [[sq, cross], [cross, sq]]
}

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix.
pub fn sym2_eigen(m: [[f64; 2]; 2]) -> (f64, f64) {
    let tr = m[0][0] + m[1][1];
    let half_gap = (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1] * m[1][0]).sqrt();
    (0.5 * tr - half_gap, 0.5 * tr + half_gap)
}

/// Hessian of the population pinball objective at `θ*(γ)`,
/// `E[f(θ*ᵀX | X)·XXᵀ]`, by midpoint quadrature on a `grid × grid` mesh.
pub fn oracle_hessian(spec: &SyntheticSpec, gamma: f64, grid: usize) -> Result<[[f64; 2]; 2]> {
    let theta = oracle_theta(spec, gamma)?;
    let grid = grid.max(1);
    let h = (spec.x_high - spec.x_low) / grid as f64;
    let mut acc = [[0.0; 2]; 2];
    for i in 0..grid {
        for j in 0..grid {
            let x = [spec.x_low + (i as f64 + 0.5) * h, spec.x_low + (j as f64 + 0.5) * h];
            let f = spec.profile(&x).pdf_abs(dot(&theta, &x).abs());
            for r in 0..2 {
                for c in 0..2 {
                    acc[r][c] += f * x[r] * x[c];
                }
            }
        }
    }
    let cells = (grid * grid) as f64;
    Ok(acc.map(|row| row.map(|v| v / cells)))
}

/// Smallest eigenvalue of [`oracle_hessian`]: the local strong-convexity
/// modulus of the pinball objective around `θ*(γ)`.
pub fn local_strong_convexity(spec: &SyntheticSpec, gamma: f64) -> Result<f64> {
    Ok(sym2_eigen(oracle_hessian(spec, gamma, 400)?).0)
}

/// Distribution constants measured from the spec: density bounds by grid
/// search over cell-centred covariates, covariance eigenvalues in closed form.
///
/// The grid deliberately avoids the far corner `(x_high, x_high)`: there
/// `θ₀ᵀx = y_max`, the tails have no room and their density is unbounded.
pub fn measured_constants(spec: &SyntheticSpec, grid: usize) -> Result<DistributionSpec> {
    let grid = grid.max(1);
    let h = (spec.x_high - spec.x_low) / grid as f64;
    let (mut f_min, mut f_max) = (f64::INFINITY, 0.0f64);
    for i in 0..grid {
        for j in 0..grid {
            let x = [spec.x_low + (i as f64 + 0.5) * h, spec.x_low + (j as f64 + 0.5) * h];
            let p = spec.profile(&x);
            f_min = f_min.min(p.inf());
            f_max = f_max.max(p.sup());
        }
    }
    let (lambda_min, lambda_max) = sym2_eigen(second_moment(spec));
    let out = DistributionSpec {
        b: spec.covariate_bound(),
        k: (spec.theta0[0].powi(2) + spec.theta0[1].powi(2)).sqrt(),
        d: 2,
        lambda_min,
        lambda_max,
        f_min,
        f_max,
        y_min: spec.y_min(),
        y_max: spec.y_max(),
    };
    out.validate()?;
    Ok(out)
}
