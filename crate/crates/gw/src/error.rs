use gw_core::cramer::CramerError;
use gw_core::deviations::DeviationError;
use gw_core::exactdist::SimError;
use gw_core::limits::LimitError;
use gw_core::PmfError;

use crate::law::LawFileError;

/// Failure of a command, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, unreadable input, or a law that does not fit the command.
    #[error("{0}")]
    Usage(String),
    /// A numerical procedure did not reach its tolerance.
    #[error("{0}")]
    Numeric(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Output { .. } => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<LawFileError> for CliError {
    fn from(e: LawFileError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<PmfError> for CliError {
    fn from(e: PmfError) -> Self {
        match e {
            PmfError::WindowOverflow { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<LimitError> for CliError {
    fn from(e: LimitError) -> Self {
        match e {
            LimitError::RootBracketFailure(_) | LimitError::QuadratureNotConverged { .. } => {
                CliError::Numeric(e.to_string())
            }
            LimitError::Pmf(p) => p.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<CramerError> for CliError {
    fn from(e: CramerError) -> Self {
        match e {
            CramerError::SaddleNotConverged { .. } => CliError::Numeric(e.to_string()),
            CramerError::Pmf(p) => p.into(),
            CramerError::Limit(l) => l.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DeviationError> for CliError {
    fn from(e: DeviationError) -> Self {
        match e {
            DeviationError::Censored { .. } => CliError::Numeric(e.to_string()),
            DeviationError::Pmf(p) => p.into(),
            DeviationError::Limit(l) => l.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::PopulationOverflow { .. } => CliError::Numeric(e.to_string()),
            SimError::NoReplications => CliError::Usage(e.to_string()),
        }
    }
}
