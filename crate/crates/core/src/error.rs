use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid instance: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A derived parameter set violates a precondition of the solver, such as
    /// the step-size/width condition `eta * grad_max < 1`.
    #[error("parameter guard: {0}")]
    ParamGuard(String),

    #[error(
        "non-positive price multiplier {multiplier} at coordinate {coordinate} in round {round}"
    )]
    Positivity {
        round: usize,
        coordinate: usize,
        multiplier: f64,
    },

    #[error("instance too large for exhaustive search: {size} configurations exceed the limit of {limit}")]
    InstanceTooLarge { size: f64, limit: f64 },

    #[error("non-uniform supply vectors are not supported by the solvers")]
    NonUniformSupply,

    #[error("reduction error: {0}")]
    Reduction(String),

    #[error("online stream error: {0}")]
    Stream(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ParamGuard(_) => "param_guard",
            Error::Positivity { .. } => "positivity",
            Error::InstanceTooLarge { .. } => "too_large",
            Error::NonUniformSupply => "non_uniform_supply",
            Error::Reduction(_) => "reduction",
            Error::Stream(_) => "stream",
            Error::Csv(_) => "csv",
        }
    }

    /// True for errors caused by bad inputs rather than by the solver run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Parse { .. }
                | Error::Dimension { .. }
                | Error::InvalidParameter(_)
                | Error::NonUniformSupply
                | Error::Reduction(_)
        )
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
