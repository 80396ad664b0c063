use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulator and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("degree sum n*k = {n}*{k} is odd; no {k}-regular graph on {n} vertices exists")]
    DegreeParity { n: usize, k: usize },

    #[error("invalid degree {k} for {n} vertices (need 1 <= k <= n-1)")]
    InvalidDegree { n: usize, k: usize },

    #[error("no simple connected {k}-regular graph on {n} vertices found after {retries} attempts")]
    RetriesExhausted { n: usize, k: usize, retries: usize },

    #[error("topology has {topology} agents but the model expects {params}")]
    SizeMismatch { topology: usize, params: usize },

    #[error("clock {clock} of agent {agent} is outside [0, {cycle_len})")]
    ClockOutOfRange { agent: usize, clock: u64, cycle_len: u32 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("malformed topology document: {0}")]
    MalformedTopology(String),

    #[error("malformed CSV at line {line}: {reason}")]
    MalformedCsv { line: u64, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            name,
            reason: reason.into(),
        }
    }
}
