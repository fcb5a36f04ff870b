use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit code for input that failed validation.
pub const EXIT_VALIDATION: i32 = 2;
/// Process exit code for failures while running a valid request.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] recount_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}{}: {source}", path.display(), line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Json {
        path: PathBuf,
        line: Option<usize>,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: expected {expected} bytes, found {actual}", path.display())]
    Size { path: PathBuf, expected: u64, actual: u64 },

    #[error("{}: format version {found} is not supported (this build reads {supported})", path.display())]
    Version { path: PathBuf, found: u32, supported: u32 },

    #[error("model blob {name}: sha256 {actual} does not match manifest {expected}")]
    Hash { name: String, expected: String, actual: String },

    #[error("model blob {name}: {reason}")]
    Blob { name: String, reason: String },

    #[error("{0}")]
    Format(String),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn json(path: impl Into<PathBuf>, line: Option<usize>) -> impl FnOnce(serde_json::Error) -> Error {
        let path = path.into();
        move |source| Error::Json { path, line, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => EXIT_RUNTIME,
            Error::Core(recount_core::Error::NonConvergence { .. }) => EXIT_RUNTIME,
            _ => EXIT_VALIDATION,
        }
    }
}
