use qfilter_core::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("{name}: {message}")]
    EnvVar { name: &'static str, message: String },

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    /// An in-run tolerance summary failed; the run itself completed.
    #[error("{0}")]
    Tolerance(String),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse_error",
            CliError::UnknownKey { .. } => "unknown_key",
            CliError::EnvVar { .. } => "env_error",
            CliError::Sim(e) => e.code(),
            CliError::Io(_) => "io_error",
            CliError::Tolerance(_) => "tolerance_failed",
            CliError::Usage(_) => "usage_error",
        }
    }
}
