//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its domain constraint.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A dictionary matrix failed the orthonormality check.
    #[error("basis is not orthonormal: max |D^T D - I| = {max_dev:.3e}")]
    NotOrthonormal { max_dev: f64 },

    /// NaN or infinity encountered in an input.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Initialization data spans a zero-dimensional subspace.
    #[error("degenerate initialization")]
    DegenerateInitialization,

    /// Not enough stored patches to rebuild the dictionary.
    #[error("insufficient history: {have} patches, need at least 2")]
    InsufficientHistory { have: usize },

    /// The candidate list for an argmin/argmax was empty.
    #[error("empty candidate set: {0}")]
    EmptyInput(&'static str),

    /// Malformed PGM payload; `offset` is the byte position of the problem.
    #[error("pgm parse error at byte {offset}: {msg}")]
    PgmParse { offset: usize, msg: String },

    /// The affine transform is not invertible.
    #[error("degenerate affine transform: |det| = {det:.3e}")]
    DegenerateTransform { det: f64 },
}
