//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by construction, validation, solving and parsing.
#[derive(Debug, Error)]
pub enum QbcError {
    /// A subsystem label was not found in a layout.
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),
    /// A layout would contain the same label twice.
    #[error("duplicate subsystem label `{0}`")]
    DuplicateLabel(String),
    /// Two objects have incompatible dimensions or layouts.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A matrix handed to a Hermitian constructor is not Hermitian.
    #[error("matrix is not Hermitian (max |x - x^dagger| = {0:e})")]
    NotHermitian(f64),
    /// A matrix expected to be an isometry is not.
    #[error("matrix is not an isometry (max |V^dagger V - 1| = {0:e})")]
    NotIsometry(f64),
    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A channel failed a validity requirement.
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    /// A problem exceeds the configured size budget.
    #[error("size budget exceeded: {0}")]
    BudgetExceeded(String),
    /// The solver did not return an optimal solution.
    #[error("solver failure: {0}")]
    Solver(String),
    /// A mathematical invariant that must hold was violated.
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
    /// Input text could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// JSON (de)serialization failed.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    /// File access failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, QbcError>;
