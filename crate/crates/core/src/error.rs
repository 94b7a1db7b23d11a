use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::Primitive;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{primitive:?}: shape mismatch: {detail}")]
    Shape { primitive: Primitive, detail: String },
    #[error("tensor shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{0}: empty batch")]
    EmptyBatch(&'static str),
    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
