//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Satellite geometry unusable: the design matrix does not have full
    /// column rank (smallest singular value below threshold).
    #[error("degenerate satellite geometry: smallest singular value {sigma_min:.3e}")]
    DegenerateGeometry { sigma_min: f64 },

    /// Two circle axes are (nearly) collinear; the pair carries no
    /// intersection information and must be skipped.
    #[error("collinear circle axes (angle {angle:.3e} rad)")]
    CollinearAxes { angle: f64 },

    /// Candidate search produced no intersections and no near-misses.
    #[error("empty candidate pool for baseline {baseline}")]
    EmptyCandidatePool { baseline: usize },

    /// No candidate tuple survived the inter-baseline angle filter, even
    /// after widening the tolerance.
    #[error("no candidate tuple passed the inter-baseline angle filter")]
    EmptyAfterFilter,

    /// Body-frame Gram matrix X_b X_b^T is singular (collinear baselines).
    #[error("singular body-frame Gram matrix: baselines are collinear")]
    SingularGram,

    /// Brute-force integer enumeration would exceed the budget.
    #[error("integer search box too large: {count} candidates exceeds limit {limit}")]
    BoxTooLarge { count: u128, limit: u128 },

    /// A covariance matrix failed its Cholesky factorization.
    #[error("covariance matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: &'static str },

    /// Inputs violate a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Text-format parse failure with a 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
