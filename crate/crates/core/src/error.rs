use std::io;

use thiserror::Error;

/// Errors produced by the mixpath library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{0}: non-finite value encountered")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid architecture mask: {0}")]
    Mask(String),

    #[error("undefined value: {0}")]
    Undefined(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("sample_count > oracle size ({requested} > {available})")]
    OracleTooSmall { requested: usize, available: usize },

    #[error("constraints infeasible: {0}")]
    Infeasible(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    Fingerprint { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
