use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad speed profile, geography, or run parameters.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    /// A structurally valid input that breaks a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A policy emitted an action that violates the transition preconditions.
    #[error("infeasible action at t={epoch}: {message}")]
    Contract { epoch: f64, message: String },

    /// The simulation reached a state that should be unreachable.
    #[error("simulation invariant violated at t={epoch}: {message}")]
    Invariant { epoch: f64, message: String },

    /// A request the caller could have avoided, such as an empty grid.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("replication with seed {seed} ({variant}) failed: {source}")]
    Replication {
        seed: u64,
        variant: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
