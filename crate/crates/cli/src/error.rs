use std::path::Path;

use thiserror::Error;

/// Everything the binary can fail with, grouped by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("{0}")]
    Infeasible(String),

    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Infeasible(_) => 4,
            CliError::Internal(_) => 1,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    pub fn json(path: &Path, err: serde_json::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

/// Library errors map onto exit codes by kind: bad parameters are config
/// problems, anything about file contents is a data problem.
impl From<cqr_core::Error> for CliError {
    fn from(err: cqr_core::Error) -> Self {
        use cqr_core::Error as E;
        match err {
            E::CalibrationInfeasible { .. } => CliError::Infeasible(err.to_string()),
            E::InvalidArgument(_) | E::PreconditionFailed(_) => CliError::Config(err.to_string()),
            E::Schema(_) | E::Row { .. } | E::Csv(_) | E::Io(_) => CliError::Data(err.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Any failure while reading an input file is a data error.
pub fn reading(path: &Path) -> impl Fn(cqr_core::Error) -> CliError + '_ {
    move |err| CliError::Data(format!("{}: {err}", path.display()))
}
