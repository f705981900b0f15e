use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The model violates one of its structural assumptions.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The observed transition has zero density under every configuration
    /// still considered possible by the filter.
    #[error("zero-likelihood observation: transition {from} -> {to} at time {time}")]
    ZeroLikelihood { from: usize, to: usize, time: usize },

    #[error("enumeration guard exceeded: {what} = {value} > {limit}")]
    GuardExceeded {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("value iteration did not converge after {sweeps} sweeps (last delta {last_delta:e})")]
    NonConvergence { sweeps: usize, last_delta: f64 },

    #[error("value iteration cannot contract: {parameter} = {value}")]
    NoContraction { parameter: &'static str, value: f64 },

    #[error("policy undefined for prefix {0:?}")]
    UndefinedPrefix(Vec<usize>),

    #[error("policy does not match model: {0}")]
    PolicyMismatch(String),

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 2 for IO and parse failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } => 2,
            _ => 1,
        }
    }
}
