use thiserror::Error;

/// Errors raised by the agent-space library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid process: {0}")]
    InvalidProcess(String),

    #[error("invalid agent: {0}")]
    InvalidAgent(String),

    #[error("state {state} outside the state set of size {n_states}")]
    StateOutOfRange { state: usize, n_states: usize },

    #[error("malformed action distribution at prime path {path}: {reason}")]
    MalformedDistribution { path: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("enumeration needs {required} entries, budget is {budget}")]
    EnumerationBudget { required: u128, budget: u128 },

    #[error("horizon mismatch: {left} vs {right}")]
    HorizonMismatch { left: usize, right: usize },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation requires a strictly Markov process")]
    NotMarkov,

    #[error("epoch {epoch}, slot {slot}: {source}")]
    Rollout {
        epoch: u64,
        slot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config errors:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
