//! Shared domain types, the pinball loss and the linear quantile model.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One labelled observation `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(invalid("sample must have at least one covariate"));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sample contains a non-finite value"));
        }
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// An ordered collection of samples sharing one covariate dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
}

impl Dataset {
    /// Builds a dataset, inferring the dimension from the first sample.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let dim =
            samples.first().map(Sample::dim).ok_or_else(|| invalid("cannot infer dimension of an empty dataset"))?;
        Self::with_dim(dim, samples)
    }

    pub fn with_dim(dim: usize, samples: Vec<Sample>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if let Some(i) = samples.iter().position(|s| s.dim() != dim) {
            return Err(invalid(format!(
                "sample {i} has dimension {} but dataset dimension is {dim}",
                samples[i].dim()
            )));
        }
        Ok(Self { samples, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    /// Samples at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset { samples: indices.iter().map(|&i| self.samples[i].clone()).collect(), dim: self.dim }
    }

    /// The first `count` samples (or all of them if fewer).
    pub fn head(&self, count: usize) -> Dataset {
        Dataset { samples: self.samples[..count.min(self.len())].to_vec(), dim: self.dim }
    }

    pub(crate) fn require_nonempty(&self, what: &str) -> Result<()> {
        if self.is_empty() {
            Err(invalid(format!("{what} dataset is empty")))
        } else {
            Ok(())
        }
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// A linear model `t_γ(x; θ) = θᵀx` for the conditional γ-quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQuantileModel {
    pub theta: Vec<f64>,
    pub gamma: f64,
}

impl LinearQuantileModel {
    pub fn new(theta: Vec<f64>, gamma: f64) -> Result<Self> {
        check_level(gamma)?;
        if theta.is_empty() {
            return Err(invalid("parameter vector must be nonempty"));
        }
        Ok(Self { theta, gamma })
    }

    pub fn zeros(dim: usize, gamma: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], gamma)
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        predict(self, x)
    }
}

/// Bounds on the data distribution that parameterize the efficiency bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    /// Bound on `‖x‖₂`.
    pub b: f64,
    /// Radius of the parameter ball.
    pub k: f64,
    pub d: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.b, self.k, self.lambda_min, self.lambda_max, self.f_min, self.f_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("distribution constants must be finite"));
        }
        if self.d == 0 || self.b <= 0.0 || self.k <= 0.0 {
            return Err(invalid("need d >= 1, B > 0 and K > 0"));
        }
        if !(0.0 < self.lambda_min && self.lambda_min <= self.lambda_max) {
            return Err(invalid("need 0 < lambda_min <= lambda_max"));
        }
        // λ_max ≤ B² holds for any covariate law supported in the B-ball.
        if self.lambda_max > self.b * self.b * (1.0 + 1e-12) {
            return Err(invalid("lambda_max exceeds B^2"));
        }
        if !(0.0 < self.f_min && self.f_min <= self.f_max) {
            return Err(invalid("need 0 < f_min <= f_max"));
        }
        if self.y_min >= self.y_max {
            return Err(invalid("need y_min < y_max"));
        }
        Ok(())
    }
}

pub(crate) fn check_level(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("level {gamma} is not in (0, 1)")))
    }
}

pub(crate) fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(invalid(format!("dimension mismatch: {a} vs {b}")))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Pinball (check) loss of predicting `t` when the label is `y`.
pub fn pinball_loss(t: f64, y: f64, gamma: f64) -> Result<f64> {
    check_level(gamma)?;
    Ok(pinball_unchecked(t, y, gamma))
}

#[inline]
pub(crate) fn pinball_unchecked(t: f64, y: f64, gamma: f64) -> f64 {
    if y >= t {
        gamma * (y - t)
    } else {
        (1.0 - gamma) * (t - y)
    }
}

pub fn predict(model: &LinearQuantileModel, x: &[f64]) -> Result<f64> {
    check_dims(model.theta.len(), x.len())?;
    Ok(dot(&model.theta, x))
}

/// Stochastic subgradient `(1{y < θᵀx} − γ)·x` of the pinball objective.
///
/// On the kink `y = θᵀx` the indicator is taken as 0.
pub fn pinball_subgradient(theta: &[f64], x: &[f64], y: f64, gamma: f64) -> Result<Vec<f64>> {
    check_dims(theta.len(), x.len())?;
    check_level(gamma)?;
    let weight = subgradient_weight(dot(theta, x), y, gamma);
    Ok(x.iter().map(|v| weight * v).collect())
}

#[inline]
pub(crate) fn subgradient_weight(t: f64, y: f64, gamma: f64) -> f64 {
    if y < t {
        1.0 - gamma
    } else {
        -gamma
    }
}

/// Mean pinball loss of `model` over `data`.
pub fn mean_pinball_loss(model: &LinearQuantileModel, data: &Dataset) -> Result<f64> {
    data.require_nonempty("evaluation")?;
    check_dims(model.dim(), data.dim())?;
    let total: f64 = data.iter().map(|s| pinball_unchecked(dot(&model.theta, &s.x), s.y, model.gamma)).sum();
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball_loss(1.0, 1.0, 0.3).unwrap(), 0.0);
        assert_eq!(pinball_loss(0.0, 1.0, 0.5).unwrap(), 0.5);
        assert!((pinball_loss(2.0, 1.0, 0.9).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn pinball_rejects_bad_level() {
        assert!(pinball_loss(0.0, 1.0, 0.0).is_err());
        assert!(pinball_loss(0.0, 1.0, 1.0).is_err());
        assert!(pinball_loss(0.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn predict_examples() {
        let m = LinearQuantileModel::new(vec![1.0, 1.0], 0.5).unwrap();
        assert_eq!(m.predict(&[2.0, 3.0]).unwrap(), 5.0);
        let z = LinearQuantileModel::zeros(2, 0.5).unwrap();
        assert_eq!(z.predict(&[7.0, -3.0]).unwrap(), 0.0);
        let m = LinearQuantileModel::new(vec![1.5, 1.5], 0.5).unwrap();
        assert_eq!(m.predict(&[20.0, 20.0]).unwrap(), 60.0);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn subgradient_examples() {
        let g = pinball_subgradient(&[0.0, 0.0], &[1.0, 2.0], 1.0, 0.5).unwrap();
        assert_eq!(g, vec![-0.5, -1.0]);
        let g = pinball_subgradient(&[2.0, 0.0], &[1.0, 0.0], 1.0, 0.5).unwrap();
        assert_eq!(g, vec![0.5, 0.0]);
        // kink: y == θᵀx uses the γ(y − t) branch
        let g = pinball_subgradient(&[1.0], &[1.0], 1.0, 0.3).unwrap();
        assert_eq!(g, vec![-0.3]);
        assert!(pinball_subgradient(&[1.0], &[1.0, 2.0], 1.0, 0.3).is_err());
    }

    #[test]
    fn batch_subgradient_matches_finite_differences() {
        let batch: Vec<(Vec<f64>, f64)> = vec![
            (vec![1.0, 2.0], 3.1),
            (vec![0.5, -1.0], -0.7),
            (vec![2.0, 0.3], 1.9),
            (vec![-1.2, 0.8], 0.05),
            (vec![0.9, 1.1], 4.0),
        ];
        let theta = [0.37, 0.81];
        let gamma = 0.8;
        let loss = |th: &[f64]| -> f64 {
            batch.iter().map(|(x, y)| pinball_unchecked(dot(th, x), *y, gamma)).sum::<f64>() / batch.len() as f64
        };
        let mut analytic = [0.0; 2];
        for (x, y) in &batch {
            let g = pinball_subgradient(&theta, x, *y, gamma).unwrap();
            for j in 0..2 {
                analytic[j] += g[j] / batch.len() as f64;
            }
        }
        let h = 1e-6;
        for j in 0..2 {
            let mut up = theta;
            let mut down = theta;
            up[j] += h;
            down[j] -= h;
            let fd = (loss(&up) - loss(&down)) / (2.0 * h);
            assert!((fd - analytic[j]).abs() < 1e-6, "coord {j}: {fd} vs {}", analytic[j]);
        }
    }

    #[test]
    fn dataset_dimension_checks() {
        let a = Sample::new(vec![1.0, 2.0], 0.0).unwrap();
        let b = Sample::new(vec![1.0], 0.0).unwrap();
        assert!(Dataset::new(vec![a.clone(), b]).is_err());
        assert!(Dataset::new(vec![]).is_err());
        assert_eq!(Dataset::new(vec![a]).unwrap().dim(), 2);
        assert!(Sample::new(vec![f64::NAN], 0.0).is_err());
        assert!(Sample::new(vec![1.0], f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn pinball_is_convex(t1 in -50.0..50.0f64, t2 in -50.0..50.0f64, lam in 0.0..1.0f64,
                             y in -50.0..50.0f64, gamma in 0.01..0.99f64) {
            let mix = lam * t1 + (1.0 - lam) * t2;
            let lhs = pinball_unchecked(mix, y, gamma);
            let rhs = lam * pinball_unchecked(t1, y, gamma) + (1.0 - lam) * pinball_unchecked(t2, y, gamma);
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn pinball_zero_iff_exact(t in -50.0..50.0f64, y in -50.0..50.0f64, gamma in 0.01..0.99f64) {
            let l = pinball_unchecked(t, y, gamma);
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, t == y);
        }

        #[test]
        fn subgradient_inequality(t in -20.0..20.0f64, tp in -20.0..20.0f64,
                                  y in -20.0..20.0f64, gamma in 0.01..0.99f64) {
            // scalar subgradient with respect to t
            let g = subgradient_weight(t, y, gamma);
            let lhs = pinball_unchecked(tp, y, gamma);
            let rhs = pinball_unchecked(t, y, gamma) + g * (tp - t);
            prop_assert!(lhs >= rhs - 1e-9);
        }

        #[test]
        fn predict_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64,
                             x1 in proptest::collection::vec(-10.0..10.0f64, 3),
                             x2 in proptest::collection::vec(-10.0..10.0f64, 3),
                             th in proptest::collection::vec(-2.0..2.0f64, 3)) {
            let m = LinearQuantileModel::new(th.clone(), 0.5).unwrap();
            let combo: Vec<f64> = x1.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
            let lhs = m.predict(&combo).unwrap();
            let rhs = a * m.predict(&x1).unwrap() + b * m.predict(&x2).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            let scaled = LinearQuantileModel::new(th.iter().map(|v| a * v).collect(), 0.5).unwrap();
            prop_assert!((scaled.predict(&x1).unwrap() - a * m.predict(&x1).unwrap()).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
