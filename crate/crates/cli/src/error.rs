use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] hrma_core::Error),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    /// 0 ok, 1 failed checks or internal trouble, 2 parse, 3 validation, 4 resource.
    pub fn exit_code(&self) -> i32 {
        use hrma_core::Error as E;
        match self {
            CliError::Parse { .. } | CliError::Core(E::Parse { .. }) => 2,
            CliError::Spec(_) | CliError::Core(E::Validation { .. } | E::Domain(_)) => 3,
            CliError::Core(E::Resource(_)) => 4,
            CliError::Io { .. } | CliError::ChecksFailed(_) | CliError::Core(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
