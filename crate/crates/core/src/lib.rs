//! Split-conformal prediction intervals built on linear quantile regression.
//!
//! The crate covers the full pipeline used to study interval efficiency:
//!
//! - [`model`]: samples, datasets, linear quantile models and the pinball loss.
//! - [`optimizer`]: projected mini-batch SGD on the pinball objective and a
//!   successive-halving learning-rate tuner.
//! - [`conformal`]: CQR / CMR scores, the conformal quantile, intervals and
//!   coverage / length metrics.
//! - [`synth`]: a synthetic well-specified distribution with an analytic
//!   conditional density, an exact quantile oracle and a rejection sampler.
//! - [`bounds`]: closed-form efficiency bounds and regime classification.
//! - [`analysis`]: reproducible Monte-Carlo sweeps over `(n, m, alpha)` and
//!   log-log slope fits.
//! - [`dataio`]: CSV ingestion, deterministic splits and standardization.

// `!(x > 0.0)` guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bounds;
pub mod conformal;
pub mod dataio;
mod error;
pub mod model;
pub mod optimizer;
pub mod seed;
pub mod synth;

pub use conformal::{CalibrationResult, CqrModelPair, PredictionInterval};
pub use error::{Error, Result};
pub use model::{Dataset, DistributionSpec, LinearQuantileModel, Sample};
pub use optimizer::{Schedule, SgdConfig, TrainReport};
pub use synth::SyntheticSpec;
