use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("index {index:?} out of range for grid with counts {counts:?}")]
    Index { index: Vec<usize>, counts: Vec<usize> },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("non-finite value {value} evaluating {what} at {location:?}")]
    Evaluation {
        what: &'static str,
        location: Vec<f64>,
        value: f64,
    },

    #[error("training diverged at iteration {iteration}: loss {loss:e} with step size {step:e}")]
    Divergence { iteration: usize, loss: f64, step: f64 },

    #[error("solution blew up at step {step} in cell {cell:?} (value {value})")]
    BlowUp {
        step: usize,
        cell: Vec<usize>,
        value: f64,
    },

    #[error("undefined convergence order: {0}")]
    Order(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code for the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 3,
            Error::BlowUp { .. } => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
