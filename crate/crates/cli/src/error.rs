use std::fmt;

use tomo_core::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or missing input (exit 2).
    Config(String),
    /// Anything else (exit 4).
    Internal(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Internal(_) => 4,
        }
    }

    /// Wraps a module error with the pipeline stage it came from. Parameter
    /// and geometry errors count as configuration errors.
    pub fn stage(stage: &str, e: Error) -> CliError {
        match e {
            Error::InvalidArgument(_)
            | Error::InvalidGeometry(_)
            | Error::MissingAngle(_)
            | Error::DimensionMismatch(_)
            | Error::Malformed { .. } => CliError::Config(format!("{stage}: {e}")),
            other => CliError::Internal(anyhow::Error::new(other).context(stage.to_string())),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Internal(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.into())
    }
}
