use thiserror::Error;

/// Errors produced by parsing, model validation and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("label {label} is not admissible for the {loss} loss (expected -1 or +1)")]
    InvalidLabel { label: f64, loss: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid group structure: {0}")]
    InvalidGroups(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver did not reach tolerance {tol:e} within {epochs} epochs (last gap {gap:e})")]
    NotConverged { tol: f64, epochs: usize, gap: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
