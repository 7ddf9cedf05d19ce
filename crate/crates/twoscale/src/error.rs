use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("refusing to run: {0}")]
    Refused(String),
    #[error(transparent)]
    Core(#[from] twoscale_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Numerical breakdowns count as a failed run; everything else means the
    /// run could not be set up.
    pub fn exit_code(&self) -> i32 {
        use twoscale_core::Error as E;
        match self {
            CliError::Core(E::NonFinite(_) | E::DegenerateFit(_)) => EXIT_FAIL,
            _ => EXIT_USAGE,
        }
    }
}

/// Core refusals become [`CliError::Refused`].
pub fn lift(e: twoscale_core::Error) -> CliError {
    match e {
        twoscale_core::Error::HypothesisFailed(m) => CliError::Refused(m),
        other => CliError::Core(other),
    }
}
