//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A named column or attribute is missing or inconsistent with the schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell could not be parsed. `row` is the zero-based data-row index.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Data violates a domain invariant (label out of range, non-finite value).
    #[error("data error: {0}")]
    Data(String),

    /// The operation needs per-class scores but the members only carry labels.
    #[error("scores unavailable: members carry labels only")]
    ScoresUnavailable,

    #[error("training diverged at epoch {epoch}: {message}")]
    Divergence { epoch: usize, message: String },

    /// Relative gain is undefined when the base accuracy is zero.
    #[error("undefined ratio: base accuracy is zero")]
    UndefinedRatio,

    /// Correlation of a constant series has no defined value.
    #[error("undefined correlation: an input series is constant")]
    UndefinedCorrelation,

    /// Malformed serialized artifact (model container, cached CSV).
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
