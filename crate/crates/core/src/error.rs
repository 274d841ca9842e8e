use std::io;

use thiserror::Error;

use crate::gnn::GnnParams;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A channel matrix is too ill-conditioned to invert.
    #[error(
        "channel matrix of satellite {satellite} is singular (condition number {condition:.3e})"
    )]
    Singular { satellite: usize, condition: f64 },

    #[error("non-finite value produced by layer `{layer}`")]
    NonFinite { layer: String },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Training produced a non-finite loss. The last parameters that gave a
    /// finite test score are kept so the run is not lost.
    #[error("training diverged at step {step}")]
    Diverged {
        step: u64,
        last_good: Box<Vec<GnnParams>>,
    },

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        message: String,
    },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(key: &str, msg: impl std::fmt::Display) -> Self {
        Error::Config {
            line: None,
            message: format!("`{key}`: {msg}"),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) => 2,
            Error::Singular { .. }
            | Error::NonFinite { .. }
            | Error::Diverged { .. }
            | Error::Capacity(_) => 3,
            Error::MissingArtifact(_) => 4,
            Error::Format(_) | Error::Io(_) => 4,
        }
    }
}
