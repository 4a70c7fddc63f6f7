use thiserror::Error;

/// Library-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation produced a NaN or infinity where a finite value is
    /// required (overflowing amplitude, zero amplitude under log, ...).
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    /// The overlap estimate ⟨φ/ψ⟩ is indistinguishable from zero, so the
    /// gradient bracket divides by noise. Re-initialize closer to the target.
    #[error("gradient blow-up: sampled overlap with the target is consistent with zero; re-initialize the variational state")]
    GradientBlowup,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
