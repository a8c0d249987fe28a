//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Evaluation requested outside the open unit interval.
    #[error("argument {value} outside the open interval (0, 1)")]
    OutsideUnitInterval { value: f64 },

    /// A constructor or operation received an invalid parameter.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Operation requires a twice-differentiable penalty.
    #[error("penalty '{penalty}' is not smooth: {operation} unsupported")]
    NonSmoothPenalty {
        penalty: String,
        operation: &'static str,
    },

    /// A root bracket could not be established; indicates the penalty
    /// violates the standing shape assumptions.
    #[error("bracketing failed in {context}")]
    BracketingFailure { context: &'static str },

    /// The common-tangent equation had no admissible sign change.
    #[error("tangent solver failed: {details}")]
    SolverFailure { details: String },

    /// Boundary derivatives are undefined for a degenerate solution.
    #[error("operation requires a two-boundary solution, got degenerate")]
    DegenerateSolution,

    /// Derivative formula denominator vanished (should be impossible for
    /// interior boundaries).
    #[error("singular denominator in boundary derivative at pi = {pi}")]
    SingularDenominator { pi: f64 },

    /// The convex envelope equals the sampled function: no continuation region.
    #[error("envelope has no affine segment (degenerate problem)")]
    EnvelopeDegenerate,

    /// The envelope carries several affine segments: disconnected
    /// continuation region, detected but not solved.
    #[error("envelope has {segments} affine segments (disconnected continuation region)")]
    EnvelopeMultiRegion { segments: usize },

    /// A sweep row violated the expected boundary monotonicity in K.
    #[error("boundary monotonicity violated between K = {k_prev} and K = {k}")]
    MonotonicityViolation { k_prev: f64, k: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

/// Convenient result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Checks that `value` lies strictly inside the unit interval.
pub(crate) fn ensure_unit_open(value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::OutsideUnitInterval { value })
    }
}
