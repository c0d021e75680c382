use std::io;

use thiserror::Error;

/// Errors produced by the forward models, samplers and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh level {0} outside supported range 1..=10")]
    LevelOutOfRange(u32),

    #[error("coefficient field is not strictly positive (value {value} at node {node})")]
    NonPositiveCoefficient { node: usize, value: f64 },

    #[error("linear system is not positive definite (pivot {pivot} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("iterative solver stalled after {iterations} iterations (relative residual {residual:e})")]
    SolverDidNotConverge { iterations: usize, residual: f64 },

    #[error("point ({x}, {y}) is not strictly inside the unit square")]
    PointOutsideDomain { x: f64, y: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter {value} outside prior domain [{lo}, {hi}] (coordinate {index})")]
    OutsideDomain {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty chain or series")]
    Empty,

    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
