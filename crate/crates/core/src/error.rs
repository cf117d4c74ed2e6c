use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments (dimension mismatch, out-of-range parameters).
    Usage,
    /// Problems with the input data itself.
    Data,
    /// Numerical breakdown (singular matrices, underflow, non-finite objectives).
    Numerical,
}

#[derive(Debug, Error)]
pub enum KdeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("output column `{0}` not found in header")]
    MissingColumn(String),
    #[error("need at least {needed} complete rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("need at least 2 columns, found {0}")]
    TooFewColumns(usize),
    #[error("zero-variance column `{0}`")]
    ZeroVariance(String),
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("degenerate sample: covariance condition number {0:.3e} exceeds 1e12")]
    DegenerateSample(f64),
    #[error("bandwidth matrix is not positive definite")]
    SingularBandwidth,
    #[error("conditional variance of the output is not positive")]
    SingularConditional,
    #[error("pilot underflow at row {0}")]
    PilotUnderflow(usize),
    #[error("no evidence: query lies outside the support of the data")]
    NoEvidence,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("objective returned a non-finite value at {0}")]
    NonFiniteObjective(f64),
}

impl KdeError {
    pub fn class(&self) -> ErrorClass {
        match self {
            KdeError::DimensionMismatch { .. } | KdeError::InvalidArgument(_) => ErrorClass::Usage,
            KdeError::Io { .. }
            | KdeError::Csv(_)
            | KdeError::MissingColumn(_)
            | KdeError::TooFewRows { .. }
            | KdeError::TooFewColumns(_)
            | KdeError::ZeroVariance(_)
            | KdeError::NonFinite { .. } => ErrorClass::Data,
            KdeError::DegenerateSample(_)
            | KdeError::SingularBandwidth
            | KdeError::SingularConditional
            | KdeError::PilotUnderflow(_)
            | KdeError::NoEvidence
            | KdeError::NonFiniteObjective(_) => ErrorClass::Numerical,
        }
    }
}

pub type Result<T, E = KdeError> = std::result::Result<T, E>;
