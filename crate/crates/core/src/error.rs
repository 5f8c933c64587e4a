use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value {value} encountered at argument {at}")]
    NonFinite { at: f64, value: f64 },

    #[error("argument {value} outside the tabulated range [-{limit}, {limit}]")]
    OutOfRange { value: f64, limit: f64 },

    #[error("transform construction failed: residual {achieved:.3e} exceeds tolerance {tol:.3e}")]
    Construction { achieved: f64, tol: f64 },

    #[error("g' is singular at s = 0 for q = {q} < 1")]
    Singular { q: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field has {got} values but the mesh has {expected} interior nodes")]
    MeshMismatch { expected: usize, got: usize },

    #[error("{method} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("no nontrivial solution exists for lambda = {lambda} <= 0")]
    NonPositiveLambda { lambda: f64 },

    #[error("no sub-solution certificate at lambda = {lambda}, q = {q}")]
    NoSubsolution { lambda: f64, q: f64 },

    #[error("no super-solution certificate at lambda = {lambda}, q = {q}")]
    NoSupersolution { lambda: f64, q: f64 },

    #[error("monotone iteration lost monotonicity at step {iteration} (node {node}, by {amount:.3e})")]
    MonotonicityViolation {
        iteration: usize,
        node: usize,
        amount: f64,
    },

    #[error("invariant failed: {what} (margin {margin:.3e})")]
    InvariantFailure { what: &'static str, margin: f64 },

    #[error("invalid bracket [{lo}, {hi}]: {reason}")]
    InvalidBracket { lo: f64, hi: f64, reason: &'static str },

    #[error("branch lost near lambda = {lambda}")]
    BranchLost { lambda: f64 },
}

impl Error {
    /// True for outcomes that are mathematical impossibilities rather than
    /// numerical breakdowns.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveLambda { .. } | Error::NoSubsolution { .. }
        )
    }
}
