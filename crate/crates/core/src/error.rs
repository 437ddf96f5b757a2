use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch in {context}: {detail}")]
    Shape {
        context: &'static str,
        detail: String,
    },

    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("gradient reversal constant must be non-negative, got {0}")]
    NegativeLambda(f64),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} must not be empty")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} gold labels vs {right} predictions")]
    LengthMismatch { left: usize, right: usize },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("vocabulary format, line {line}: {message}")]
    VocabularyFormat { line: usize, message: String },

    #[error("label `{label}` is not part of the {space} label space")]
    LabelNotInSpace {
        label: &'static str,
        space: &'static str,
    },

    #[error("model has no domain head but lambda = {0} > 0")]
    MissingDomainHead(f64),

    #[error("no related examples for stage 2")]
    NoRelatedExamples,
}
