use std::path::PathBuf;

/// Failures surfaced to the shell, each with a fixed exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Identification(String),

    #[error(transparent)]
    Core(#[from] tsdag::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// 2 usage or IO, 3 numerical failure, 4 identification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Identification(_) => 4,
            CliError::Core(e) if e.is_usage_failure() => 2,
            CliError::Core(e) if e.is_identification_failure() => 4,
            CliError::Core(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
