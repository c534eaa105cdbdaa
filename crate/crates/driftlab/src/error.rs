use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("unsupported expansion spec: {0}")]
    UnsupportedSpec(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular ladder term: z - p*eps = {gap:e}")]
    Singularity { gap: f64 },
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn degenerate(msg: impl Into<String>) -> Error {
    Error::NumericalDegeneracy(msg.into())
}

impl Error {
    /// Process exit status for the command-line runner: 3 for numerical
    /// degeneracy, 2 for everything else (configuration, input, I/O).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalDegeneracy(_) | Error::Singularity { .. } => 3,
            _ => 2,
        }
    }
}
