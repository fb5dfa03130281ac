use thiserror::Error;

/// Errors produced by the solvers, samplers and experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("singular system: pivot {pivot:e} at row {row} (diagonal scale {scale:e}){}", seed_note(.seed))]
    Singular {
        row: usize,
        pivot: f64,
        scale: f64,
        seed: Option<u64>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn seed_note(seed: &Option<u64>) -> String {
    match seed {
        Some(s) => format!(", draw seed {s}"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
