use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function (negative x, a pole, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid parameters or options; nothing was computed.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A floating-point result was non-finite or an algorithm failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The orthogonal-polynomial build ran out of precision at degree `n`.
    #[error("precision exhausted at n = {n}: {detail}")]
    PrecisionExhausted { n: usize, detail: String },

    /// The difference-system iteration hit a near-zero divisor.
    #[error("difference system broke down at n = {n}, k = {k}: {detail}")]
    IterationBreakdown { n: usize, k: usize, detail: String },

    /// A closed form needs a denominator that is (numerically) zero.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// Newton's method did not converge.
    #[error("solver failed after {iterations} iterations: {detail}")]
    Solver { iterations: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than by the request.
    pub fn is_numeric_breakdown(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_)
                | Error::PrecisionExhausted { .. }
                | Error::IterationBreakdown { .. }
                | Error::Degenerate(_)
                | Error::Solver { .. }
        )
    }
}
