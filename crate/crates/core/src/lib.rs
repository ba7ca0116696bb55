//! Ordinal classification with a softmax hidden layer.
//!
//! This crate implements a family of training losses for ordinal targets
//! (cross-entropy, squared error on a soft argmax with fixed or learnable
//! anchors, cumulative binary encoding, and a direct surrogate for the
//! quadratic weighted kappa), the kappa metric itself, the matching
//! prediction rules, a synthetic ordinal data generator, and a seeded
//! experiment harness that ties them together behind a CLI.

pub mod data;
pub mod decode;
pub mod gradcheck;
pub mod harness;
pub mod heads;
pub mod net;
pub mod qwk;
pub mod tensor;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
