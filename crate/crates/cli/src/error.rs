use std::path::PathBuf;

use monogram_core::Error as CoreError;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path} already exists; pass --force to overwrite")]
    Exists { path: PathBuf },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Exists { .. } => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(CoreError::Divergence { .. }) => EXIT_DIVERGENCE,
            CliError::Core(_) | CliError::Io { .. } => EXIT_DATA,
        }
    }
}
