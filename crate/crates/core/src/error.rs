//! Library error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed `.dpomdp` input; `line` is 1-based.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid controller: {0}")]
    InvalidController(String),

    #[error("invalid episode data: {0}")]
    InvalidEpisodes(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Every node assigns zero probability to the logged action.
    #[error("zero normalizer at step {step} (episode {episode}, agent {agent})")]
    ZeroNormalizer { episode: usize, agent: usize, step: usize },

    /// All importance-weighted rewards vanished.
    #[error("degenerate value estimate: {0}")]
    DegenerateValue(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
