//! Error taxonomy of the command-line surface.
//!
//! Every failure is folded into one of three user-facing classes, each with
//! a fixed process exit code: configuration/usage problems (2), problems
//! with input or output data (3), and solver non-convergence (4).

use rydex_core::lsq::FitError;
use rydex_core::rxmc::RxmcError;
use rydex_core::{ModelError, ParamError};

/// A task failure with an associated exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration: unknown keys, unparseable or missing
    /// values, inconsistent combinations. Exit code 2.
    #[error("usage error: {0}")]
    Usage(String),
    /// Bad input data or an I/O failure while reading or writing. Exit 3.
    #[error("data error: {0}")]
    Data(String),
    /// A solver finished without meeting its convergence criteria. Exit 4.
    #[error("did not converge: {0}")]
    NonConvergence(String),
}

impl CliError {
    /// The process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }

    /// Wraps a read/write failure on `path`.
    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<ModelError> for CliError {
    fn from(err: ModelError) -> Self {
        // Model errors reached from a task mean the assembled inputs were
        // unusable (bad grids, invalid parameters read from files).
        CliError::Data(err.to_string())
    }
}

impl From<ParamError> for CliError {
    fn from(err: ParamError) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(err: FitError) -> Self {
        match err {
            // Shape problems in the supplied data.
            FitError::Underdetermined { .. }
            | FitError::CenterTable(_)
            | FitError::NonPositiveSample { .. }
            | FitError::TooFewPoints { .. }
            | FitError::EnergyOutOfRange { .. }
            | FitError::NonMonotonicBracket(_)
            | FitError::Model(_)
            | FitError::NonFiniteEvaluation(_) => CliError::Data(err.to_string()),
            FitError::DegenerateDesign(_) => CliError::Usage(err.to_string()),
            FitError::Params(e) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<RxmcError> for CliError {
    fn from(err: RxmcError) -> Self {
        match err {
            RxmcError::Model(e) => CliError::Data(e.to_string()),
            // Ladder and prior mistakes come from the run configuration.
            other => CliError::Usage(other.to_string()),
        }
    }
}
