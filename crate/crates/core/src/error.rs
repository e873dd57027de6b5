use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}, largest {max_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("invalid NIG parameters: {0}")]
    InvalidNig(String),

    #[error("skewness-kurtosis bound violated: skewness^2 = {skew_sq} but must be < 3(kurtosis-3)/5 = {bound}")]
    SkewKurtBound { skew_sq: f64, bound: f64 },

    #[error("target correlation {target} is outside the attainable range [{lo}, {hi}]")]
    CorrelationUnattainable { target: f64, lo: f64, hi: f64 },

    #[error("numerical integration failed: {0}")]
    Integration(String),

    #[error("numerical breakdown in LP solver: {0}")]
    NumericalBreakdown(String),

    #[error("MILP has {count} binary variables, budget is {budget}")]
    BinaryBudgetExceeded { count: usize, budget: usize },

    #[error("degenerate simplex cell: {0}")]
    DegenerateCell(String),

    #[error("internal solver error: {0}")]
    Internal(String),

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
