//! Run configuration, read from a TOML file. Every key has a default and
//! unknown keys are rejected so that typos fail loudly.

use std::path::{Path, PathBuf};

use cqr_core::analysis::{Method, OracleMode, RateChoice, SweepPlan, TrainingPlan};
use cqr_core::optimizer::{log_grid, Schedule, DEFAULT_GRID_POINTS};
use cqr_core::synth::{SyntheticSpec, DEFAULT_ALPHA0, DEFAULT_X_HIGH, DEFAULT_X_LOW};
use cqr_core::DistributionSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for everything random.
    pub seed: u64,
    /// Sweep worker threads; 0 picks the number of CPUs.
    pub workers: usize,
    /// Directory that receives every output file.
    pub out: PathBuf,
    pub data: DataSection,
    pub synth: SynthSection,
    pub sgd: SgdSection,
    pub sweep: SweepSection,
    pub bounds: BoundsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            out: PathBuf::from("out"),
            data: DataSection::default(),
            synth: SynthSection::default(),
            sgd: SgdSection::default(),
            sweep: SweepSection::default(),
            bounds: BoundsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Name of the label column in input CSVs; every other column is a feature.
    pub label: String,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { label: "y".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// Fixed slope; drawn uniformly from [1, 2]² using the seed when absent.
    pub theta0: Option<[f64; 2]>,
    pub alpha0: f64,
    pub x_low: f64,
    pub x_high: f64,
    pub n: usize,
    pub m: usize,
    pub test_size: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            theta0: None,
            alpha0: DEFAULT_ALPHA0,
            x_low: DEFAULT_X_LOW,
            x_high: DEFAULT_X_HIGH,
            n: 2000,
            m: 2000,
            test_size: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    InverseTime,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdSection {
    pub schedule: ScheduleKind,
    /// Fixed rate `c`; tuned by successive halving when absent.
    pub rate: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub projection_radius: Option<f64>,
    pub tune_low: f64,
    pub tune_high: f64,
    pub tune_points: usize,
    pub tune_budget: usize,
}

impl Default for SgdSection {
    fn default() -> Self {
        let plan = TrainingPlan::default();
        Self {
            schedule: ScheduleKind::Constant,
            rate: None,
            batch_size: plan.batch_size,
            epochs: plan.epochs,
            projection_radius: plan.projection_radius,
            tune_low: 1e-5,
            tune_high: 1.0,
            tune_points: DEFAULT_GRID_POINTS,
            tune_budget: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub method: Method,
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub trials: usize,
    pub test_size: usize,
    pub oracle_mode: OracleMode,
}

impl Default for SweepSection {
    fn default() -> Self {
        let plan = SweepPlan::default();
        Self {
            method: plan.method,
            n_grid: plan.n_grid,
            m_grid: plan.m_grid,
            alpha_grid: plan.alpha_grid,
            trials: plan.trials,
            test_size: plan.test_size,
            oracle_mode: plan.oracle_mode,
        }
    }
}

/// Problem constants for the bound evaluators. Any constant left unset is
/// taken from the synthetic distribution described by `[synth]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub b: Option<f64>,
    pub k: Option<f64>,
    pub d: Option<usize>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn synthetic_spec(&self) -> CliResult<SyntheticSpec> {
        let s = &self.synth;
        let theta0 = s.theta0.unwrap_or_else(|| SyntheticSpec::from_seed(self.seed).theta0);
        Ok(SyntheticSpec::new(theta0, s.alpha0, s.x_low, s.x_high)?)
    }

    pub fn training_plan(&self) -> CliResult<TrainingPlan> {
        let s = &self.sgd;
        let schedule = match s.schedule {
            ScheduleKind::InverseTime => Schedule::InverseTime(1.0),
            ScheduleKind::Constant => Schedule::Constant(1.0),
        };
        let rate = match s.rate {
            Some(rate) => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(CliError::Config(format!("sgd.rate must be positive, got {rate}")));
                }
                RateChoice::Fixed { rate }
            }
            None => {
                if !(s.tune_low > 0.0 && s.tune_low <= s.tune_high) || s.tune_points == 0 {
                    return Err(CliError::Config(
                        "sgd tuning grid needs 0 < tune_low <= tune_high and tune_points >= 1".into(),
                    ));
                }
                RateChoice::Tuned { grid: log_grid(s.tune_low, s.tune_high, s.tune_points), budget: s.tune_budget }
            }
        };
        if s.batch_size == 0 || s.epochs == 0 {
            return Err(CliError::Config("sgd.batch_size and sgd.epochs must be at least 1".into()));
        }
        Ok(TrainingPlan {
            schedule,
            batch_size: s.batch_size,
            epochs: s.epochs,
            projection_radius: s.projection_radius,
            rate,
        })
    }

    pub fn sweep_plan(&self) -> CliResult<SweepPlan> {
        let s = &self.sweep;
        let plan = SweepPlan {
            method: s.method,
            n_grid: s.n_grid.clone(),
            m_grid: s.m_grid.clone(),
            alpha_grid: s.alpha_grid.clone(),
            trials: s.trials,
            test_size: s.test_size,
            master_seed: self.seed,
            oracle_mode: s.oracle_mode,
            training: self.training_plan()?,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Constants for the bound evaluators: explicit values override the
    /// ones measured on the synthetic distribution.
    pub fn distribution_spec(&self) -> CliResult<DistributionSpec> {
        let b = &self.bounds;
        let base = cqr_core::synth::measured_constants(&self.synthetic_spec()?, 400)?;
        let spec = DistributionSpec {
            b: b.b.unwrap_or(base.b),
            k: b.k.unwrap_or(base.k),
            d: b.d.unwrap_or(base.d),
            lambda_min: b.lambda_min.unwrap_or(base.lambda_min),
            lambda_max: b.lambda_max.unwrap_or(base.lambda_max),
            f_min: b.f_min.unwrap_or(base.f_min),
            f_max: b.f_max.unwrap_or(base.f_max),
            ..base
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("sede = 3").is_err());
        assert!(RunConfig::parse("[sgd]\nbatchsize = 3").is_err());
        assert!(RunConfig::parse("[nope]\n").is_err());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::parse(
            r#"
            seed = 7
            [synth]
            theta0 = [1.5, 1.25]
            n = 100
            [sgd]
            schedule = "inverse-time"
            rate = 0.5
            [sweep]
            method = "cmr"
            n_grid = [200]
            m_grid = [200]
            alpha_grid = [0.2]
            trials = 1
            oracle_mode = "oracle-theta"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.synthetic_spec().unwrap().theta0, [1.5, 1.25]);
        let plan = cfg.sweep_plan().unwrap();
        assert_eq!(plan.method, Method::Cmr);
        assert_eq!(plan.oracle_mode, OracleMode::OracleTheta);
        assert_eq!(plan.training.rate, RateChoice::Fixed { rate: 0.5 });
        assert_eq!(plan.training.schedule, Schedule::InverseTime(1.0));
    }

    #[test]
    fn bad_values_are_config_errors() {
        let cfg = RunConfig::parse("[sweep]\ntrials = 0").unwrap();
        assert_eq!(cfg.sweep_plan().unwrap_err().exit_code(), 2);
        let cfg = RunConfig::parse("[sgd]\nrate = -1.0").unwrap();
        assert_eq!(cfg.training_plan().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn explicit_bound_constants_skip_measurement() {
        let cfg = RunConfig::parse(
            "[bounds]\nb = 1.0\nk = 1.0\nd = 2\nlambda_min = 0.2\nlambda_max = 0.5\nf_min = 0.5\nf_max = 2.0",
        )
        .unwrap();
        let spec = cfg.distribution_spec().unwrap();
        assert_eq!((spec.b, spec.d, spec.f_max), (1.0, 2, 2.0));
    }
}
