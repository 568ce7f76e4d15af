//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix or vector had the wrong shape; names the offending object.
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Operation requires a first-order operator (or another specific order).
    #[error("unsupported operator order {order}: {reason}")]
    UnsupportedOrder { order: usize, reason: &'static str },

    /// The requested pair of states admits no lamination direction.
    #[error("incompatible states: no lamination direction (residual {residual:.3e})")]
    IncompatibleStates { residual: f64 },

    /// Region list does not tile the domain.
    #[error("tiling error: {0}")]
    Tiling(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Construction parameters outside their admissible domain.
    #[error("parameter domain violation: {0}")]
    ParameterDomain(String),

    /// Branching refinement produced no refinable layer.
    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),

    /// Refinement-scale sequence violates an admissibility constraint.
    #[error("inadmissible scale sequence: {0}")]
    ScaleSequence(String),

    /// Input is already a well; nothing to decompose.
    #[error("trivial input: {0}")]
    TrivialInput(String),

    /// Queried matrix lies outside the relaxed hull.
    #[error("hull membership: {0}")]
    HullMembership(String),

    /// Brute-force search would exceed its node budget.
    #[error("enumeration budget exceeded: {0}")]
    EnumerationBudget(String),

    #[error("fit error: {0}")]
    Fit(String),

    /// A diagnostic needs a calibration constant that has not been computed.
    #[error("must calibrate first: {0}")]
    MustCalibrate(&'static str),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
