//! Standard-library companion to `deqcert-core`: dataset generation and IO,
//! final-layer training, gap measurement, grid sweeps, SVG rendering, the
//! Monte-Carlo lemma verification harness, and the `deqcert` command-line
//! front end.
//!
//! Everything here is deterministic given a configuration and a seed:
//! random streams are derived per cell and per draw, so reruns reproduce
//! outputs byte for byte.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod svg;
pub mod verify;

use deqcert_core::constants::ConstantsError;
use deqcert_core::fixed_point::SolveError;
use deqcert_core::operators::OperatorError;

use crate::experiments::ExperimentError;

/// Process exit codes: 0 success, 1 verification failure, 2 configuration
/// or IO error, 3 certification failure, 4 solver failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("certification failure: {0}")]
    Certification(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Certification(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}

impl From<OperatorError> for CliError {
    fn from(e: OperatorError) -> Self {
        CliError::Certification(e.to_string())
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<ConstantsError> for CliError {
    fn from(e: ConstantsError) -> Self {
        match &e {
            ConstantsError::CertifyFailure { .. } | ConstantsError::Operator(_) => {
                CliError::Certification(e.to_string())
            }
            ConstantsError::SolveFailure { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Operator(_) | ExperimentError::RankDeficient { .. } => {
                CliError::Certification(e.to_string())
            }
            ExperimentError::Solve(_) => CliError::Solver(e.to_string()),
            ExperimentError::Constants(inner) => CliError::from(inner),
            ExperimentError::Io { .. } => CliError::Config(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
