use thiserror::Error;

use crate::scenario::expr::ExprError;

pub type Result<T> = std::result::Result<T, MagnoError>;

/// Failures raised by the numerical routines.
///
/// Diagnostic checks (compatibility, Hamilton-Jacobi residuals) report their
/// outcome in a report value instead; these variants are reserved for inputs
/// on which a computation cannot proceed at all.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagnoError {
    #[error("non-finite value encountered while evaluating {what}")]
    NumericalDomain { what: String },

    #[error("degenerate two-form: {detail}")]
    DegenerateForm { detail: String },

    #[error("degenerate constraint: rank {rank} < {expected} constraints")]
    DegenerateConstraint { rank: usize, expected: usize },

    #[error("compatibility condition violated: {detail}")]
    Compatibility { detail: String },

    #[error("image of the one-form leaves the constraint submanifold at q = {q:?} (residual {residual:.3e})")]
    ImageNotInM { q: Vec<f64>, residual: f64 },

    #[error("tangent image of the one-form leaves K at q = {q:?} (residual {residual:.3e})")]
    ImageNotInK { q: Vec<f64>, residual: f64 },

    #[error("mass matrix is not positive definite at q = {q:?}")]
    NotPositiveDefinite { q: Vec<f64> },

    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Expr(#[from] ExprError),
}

impl MagnoError {
    pub(crate) fn domain(what: impl Into<String>) -> Self {
        MagnoError::NumericalDomain { what: what.into() }
    }

    pub(crate) fn dims(detail: impl Into<String>) -> Self {
        MagnoError::DimensionMismatch {
            detail: detail.into(),
        }
    }
}
