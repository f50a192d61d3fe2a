//! Crate-wide error type.
//!
//! Errors are grouped by how a caller should react: data errors mean the
//! input files are malformed, config errors mean the request itself is
//! invalid, and numerical errors mean the requested computation is not
//! well-posed on this data (singular covariance, degenerate residuals).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // ---- data / ingestion ----
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty input file: {path}")]
    EmptyFile { path: String },
    #[error("duplicate column name `{name}`")]
    DuplicateName { name: String },
    #[error("row {row} has {got} fields, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("unparseable number at row {row}, column `{column}`: `{value}`")]
    UnparseableNumber { row: usize, column: String, value: String },
    #[error("non-finite value at row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("panels do not cover the same periods (first difference at row {row})")]
    PeriodMismatch { row: usize },

    // ---- configuration / request ----
    #[error("unknown name `{name}`")]
    UnknownName { name: String },
    #[error("selection is empty: {context}")]
    EmptySelection { context: String },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    // ---- numerical ----
    #[error("covariance matrix is singular or indefinite (condition number {cond:.3e}) for {context}")]
    SingularCovariance { cond: f64, context: String },
    #[error("covariance matrix is not positive definite for {context}")]
    NotPositiveDefinite { context: String },
    #[error("zero residual variance with nonzero pricing error on asset `{name}`")]
    ZeroResidualVariance { name: String },
    #[error("mean vector is exactly zero; tangency weights are undefined")]
    ZeroMeanVector,
    #[error("every candidate factor failed numerically at step {step}")]
    AllCandidatesFailed { step: usize },
    #[error("bootstrap resampling failed {failures} times, exceeding the retry cap")]
    BootstrapRetryCap { failures: usize },
}

impl Error {
    /// Stable process exit code for scripting: 2 usage/config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownName { .. }
            | Error::EmptySelection { .. }
            | Error::InvalidParam { .. }
            | Error::DimensionMismatch { .. } => 2,
            Error::Io { .. }
            | Error::EmptyFile { .. }
            | Error::DuplicateName { .. }
            | Error::RaggedRow { .. }
            | Error::UnparseableNumber { .. }
            | Error::NonFinite { .. }
            | Error::PeriodMismatch { .. } => 3,
            Error::SingularCovariance { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::ZeroResidualVariance { .. }
            | Error::ZeroMeanVector
            | Error::AllCandidatesFailed { .. }
            | Error::BootstrapRetryCap { .. } => 4,
        }
    }

    /// Short machine-readable kind tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::EmptyFile { .. } => "empty_file",
            Error::DuplicateName { .. } => "duplicate_name",
            Error::RaggedRow { .. } => "ragged_row",
            Error::UnparseableNumber { .. } => "unparseable_number",
            Error::NonFinite { .. } => "non_finite",
            Error::PeriodMismatch { .. } => "period_mismatch",
            Error::UnknownName { .. } => "unknown_name",
            Error::EmptySelection { .. } => "empty_selection",
            Error::InvalidParam { .. } => "invalid_param",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::SingularCovariance { .. } => "singular_covariance",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::ZeroResidualVariance { .. } => "zero_residual_variance",
            Error::ZeroMeanVector => "zero_mean_vector",
            Error::AllCandidatesFailed { .. } => "all_candidates_failed",
            Error::BootstrapRetryCap { .. } => "bootstrap_retry_cap",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
