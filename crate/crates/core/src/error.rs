use thiserror::Error;

/// Errors raised by the annotation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Two inputs that must share a shape do not.
    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch { what: &'static str, expected: String, actual: String },

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A synthetic scene description cannot be realized.
    #[error("invalid scene specification: {0}")]
    Spec(String),

    /// A region carries no usable feature mass.
    #[error("degenerate region {region}: {reason}")]
    DegenerateRegion { region: u32, reason: String },

    /// A padded patch is too small to tile into descriptor blocks.
    #[error("degenerate patch {width}x{height}: needs at least one {block}x{block} block")]
    DegeneratePatch { width: u32, height: u32, block: u32 },

    /// An input image too small to process.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The likelihood collapsed (an observed entry has zero model probability).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn mismatch(what: &'static str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::DimensionMismatch { what, expected: expected.to_string(), actual: actual.to_string() }
}
