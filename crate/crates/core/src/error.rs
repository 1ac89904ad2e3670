use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("starvation: dynamic sampling kept no prompt group after {rounds} rounds")]
    Starvation { rounds: usize },
    #[error("rollout stalled at tick {tick}: {fresh} fresh and {pooled} pooled completions, no work pending")]
    Stall { tick: u64, fresh: usize, pooled: usize },
    #[error("numerical abort at step {step}: {detail}")]
    NumericalAbort { step: usize, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Starvation { .. } | Error::Stall { .. } => 3,
            Error::NumericalAbort { .. } => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
