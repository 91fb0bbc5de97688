//! `cqr`: generate synthetic data, train quantile models, calibrate and
//! predict conformal intervals, run Monte-Carlo sweeps, fit scaling slopes
//! and evaluate the efficiency bounds.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{FitAgainst, ModelArgs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "cqr", version, about = "Conformalized quantile / median regression toolkit")]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed (overrides the config).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for sweeps; 0 uses every CPU.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ModelFlags {
    /// Lower quantile model (CQR).
    #[arg(long, requires = "upper", conflicts_with = "median")]
    lower: Option<PathBuf>,

    /// Upper quantile model (CQR).
    #[arg(long, requires = "lower")]
    upper: Option<PathBuf>,

    /// Median model (CMR).
    #[arg(long)]
    median: Option<PathBuf>,
}

impl ModelFlags {
    fn resolve(self) -> CliResult<ModelArgs> {
        match (self.lower, self.upper, self.median) {
            (Some(lower), Some(upper), None) => Ok(ModelArgs::Cqr { lower, upper }),
            (None, None, Some(median)) => Ok(ModelArgs::Cmr { median }),
            _ => Err(CliError::Config("give either --lower and --upper, or --median".into())),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample train / calibration / test CSVs from the synthetic distribution.
    Synth,
    /// Fit a linear quantile model with SGD.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Quantile level in (0, 1).
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compute the conformal offset on a calibration set.
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        models: ModelFlags,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Emit prediction intervals for every row of a CSV.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[command(flatten)]
        models: ModelFlags,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the Monte-Carlo sweep described by the `[sweep]` section.
    Sweep,
    /// Fit log-log slopes to a records CSV.
    Fit {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_enum, default_value = "n")]
        against: FitAgainst,
        /// α values pooled by `--against inv-nalpha2`.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate the efficiency bounds for the configured constants.
    Bounds,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Train { data, gamma, output } => commands::train(&cfg, &data, gamma, output),
        Command::Calibrate { data, alpha, models, output } => {
            commands::calibrate(&cfg, &data, alpha, &models.resolve()?, output)
        }
        Command::Predict { data, calibration, models, output } => {
            commands::predict(&cfg, &data, &calibration, &models.resolve()?, output)
        }
        Command::Sweep => commands::sweep(&cfg),
        Command::Fit { records, against, alphas, output } => commands::fit(&cfg, &records, against, &alphas, output),
        Command::Bounds => commands::bounds(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
