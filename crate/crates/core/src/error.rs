use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the ROM pipeline.
#[derive(Debug, Error)]
pub enum RomError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("blow-up at step {step}: {reason}")]
    BlowUp { step: usize, reason: String },

    #[error("requested {requested} modes but numerical rank is {achievable}")]
    Rank { requested: usize, achievable: usize },

    #[error("zero fluctuation energy")]
    ZeroFluctuation,

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: unsupported format version (expected `{expected}`, found `{found}`)", path.display())]
    Version {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RomError {
    /// True for numerical failures (blow-up, singular solves).
    pub fn is_numerical(&self) -> bool {
        matches!(self, RomError::BlowUp { .. } | RomError::Solver(_))
    }
}

pub type Result<T> = std::result::Result<T, RomError>;

pub(crate) fn config<S: Into<String>>(msg: S) -> RomError {
    RomError::Config(msg.into())
}

pub(crate) fn dim<S: Into<String>>(msg: S) -> RomError {
    RomError::Dimension(msg.into())
}
