use thiserror::Error;

use crate::elbo::OptimizationTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not symmetric (|a[{i}][{j}] - a[{j}][{i}]| = {gap:e})")]
    NotSymmetric { i: usize, j: usize, gap: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset `{dataset}` is missing column `{column}`")]
    MissingColumn { dataset: String, column: String },

    #[error("column `{column}` has length {got}, expected {expected}")]
    WrongLength { column: String, expected: usize, got: usize },

    #[error("non-finite log density at {count} of {n} draws")]
    NonFiniteDensity { count: usize, n: usize },

    #[error("non-finite gradient at draw {draw}")]
    NonFiniteGradient { draw: usize },

    #[error("optimizer diverged at step {step}")]
    Diverged {
        step: usize,
        trace: Box<OptimizationTrace>,
    },

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("could not bracket a root: {0}")]
    BracketFailure(String),

    #[error("degenerate denominator: |log p(z)| = {0:e}")]
    DegenerateDenominator(f64),

    #[error("only {valid} valid samples (need {required})")]
    TooFewValidSamples { valid: usize, required: usize },

    #[error("coordinate {coord} has zero scale (Var_p = 0 and E_p = 0)")]
    ZeroScale { coord: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
