use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hfrscope::Error),

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: io::Error },

    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
}

impl CliError {
    pub fn file(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::File { path: path.to_path_buf(), source }
    }

    /// 1 usage, 2 data or I/O, 3 insufficient data.
    pub fn exit_code(&self) -> u8 {
        use hfrscope::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(E::InvalidArgument(_) | E::SchemaConfig(_)) => 1,
            CliError::Core(E::InsufficientData(_)) => 3,
            CliError::Core(_) | CliError::File { .. } | CliError::Json { .. } => 2,
        }
    }
}
