use thiserror::Error;

/// Errors from the pointwise eigenvalue algebra.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MathError {
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("excluded index {index} appears more than once")]
    DuplicateIndex { index: usize },
    #[error("spectrum has {len} entries, expected {expected}")]
    DimensionMismatch { len: usize, expected: usize },
    #[error("quotient order m={m} must satisfy 1 <= m <= n={n}")]
    BadQuotientOrder { m: usize, n: usize },
    #[error("eigenvalue vector leaves the closed positive cone (entry {index} is negative)")]
    OutsideClosure { index: usize },
    #[error("eigenvalue vector not strictly inside the positive cone (entry {index} <= 0)")]
    OutsideCone { index: usize },
    #[error("matrix is not Hermitian (entry ({i},{j}) differs from the conjugate transpose)")]
    NotHermitian { i: usize, j: usize },
    #[error("matrix is not positive definite (pivot {index} <= 0 in Cholesky)")]
    NotPositiveDefinite { index: usize },
}

/// Errors from grid fields and sitewise matrix assembly.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("grid shapes differ")]
    ShapeMismatch,
    #[error("grid must have at least 4 points per axis and an even count, got {points}")]
    BadGridSize { points: usize },
    #[error("complex dimension {n} unsupported (1 <= n <= 4)")]
    BadDimension { n: usize },
    #[error("metric is not positive definite")]
    MetricNotPositiveDefinite(#[from] MathError),
    #[error("eigenvalues leave the positive cone at site {site} (coords {coords:?})")]
    InadmissibleSite { site: usize, coords: Vec<usize> },
}

/// Errors surfaced by the Newton, continuity, and flow drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("admissibility unrecoverable at minimum damping step (site {site})")]
    NonAdmissibleStep { site: usize },
    #[error("no convergence after {iters} iterations, residual {residual:e}")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("continuity step underflow at t = {t}")]
    ContinuationStuck { t: f64 },
    #[error("flow left the admissible set at time {time}")]
    FlowBlowup { time: f64 },
    #[error("flow step {dt:e} exceeds the stability bound {bound:e}")]
    FlowDtRejected { dt: f64, bound: f64 },
    #[error("right hand side psi must be positive everywhere (site {site})")]
    PsiNotPositive { site: usize },
}
