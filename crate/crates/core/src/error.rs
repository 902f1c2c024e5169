use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("x = {x} is not above the support edge {edge}")]
    BelowEdge { x: f64, edge: f64 },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("edge bracket failure: {0}")]
    BracketFailure(String),

    #[error("no feasible starting point: {0}")]
    Infeasible(String),

    #[error("statistically inconclusive: {0}")]
    Inconclusive(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Errors caused by the caller's input rather than by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidProfile(_)
                | Error::DimensionMismatch { .. }
                | Error::OutOfRange(_)
                | Error::Io(_)
        )
    }
}
