use thiserror::Error;

/// Errors raised by model construction, the Bergman-space functionals and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("hermitian form is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is not hermitian (asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("quadrature resolution {given} is below the exactness threshold {required}")]
    ResolutionTooLow { given: usize, required: usize },

    #[error("polytope is not reflexive: {0}")]
    NotReflexive(String),

    #[error("truncation error estimate {0:e} exceeds 1e-8")]
    TruncationTooLarge(f64),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("form is not block-diagonal for the weight decomposition (off-block mass {0:e})")]
    NotBlockDiagonal(f64),

    #[error("lattice vector {0:?} is not primitive")]
    NotPrimitive(Vec<i64>),

    #[error("missing data: {0}")]
    Missing(&'static str),

    #[error("derivative samples not monotone: drop of {drop:e} at t = {t}")]
    NonMonotone { t: f64, drop: f64 },

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("positive definiteness lost at solver iteration {iteration}: {source}")]
    SolverBreakdown {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
