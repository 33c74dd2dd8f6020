use thiserror::Error;

use crate::model::Diagnostic;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("perturbation for row {row} is negative ({value})")]
    NegativePerturbation { row: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error("row {0} is already in the factorization")]
    DuplicateRow(usize),
    #[error("row {row} out of range for a matrix with {nrows} rows")]
    RowOutOfRange { row: usize, nrows: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("working-set rows are linearly dependent (pivot {delta:e})")]
    Dependent { delta: f64 },
    #[error("degenerate pivot {0:e} in factorization")]
    Degenerate(f64),
    #[error("position {position} out of range for {len} factorized rows")]
    PositionOutOfRange { position: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("hard constraints are infeasible")]
    InfeasibleHardLevel,
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("objective matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("invalid hierarchy: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidHierarchy(Vec<Diagnostic>),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Factor(#[from] FactorError),
}
