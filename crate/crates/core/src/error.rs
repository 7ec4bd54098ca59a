use thiserror::Error;

/// Errors raised by the numerical modules.
///
/// Numeric payloads are reported as `f64` regardless of the working scalar.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("surface reaches the bottom: min(eta + b) = {clearance:.3e} (floor {floor:.3e})")]
    BottomCollision { clearance: f64, floor: f64 },

    #[error("grid mismatch: expected {expected} points, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("fixed-point iteration left the contraction regime after {iterations} iterations (last contraction ratio {last_ratio:.3})")]
    ContractionFailure { iterations: usize, last_ratio: f64 },

    #[error("singular factorization in {0}")]
    Singular(&'static str),

    #[error("time stepping became unstable at t = {time:.4e} (norm {norm:.3e}); reduce dt")]
    Instability { time: f64, norm: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition<S: Into<String>>(msg: S) -> Error {
    Error::Precondition(msg.into())
}
