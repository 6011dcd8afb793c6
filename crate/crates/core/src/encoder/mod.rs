//! Source-to-embedding encoder.
//!
//! Any type implementing [`CodeEmbedder`] can back retrieval; the built-in
//! [`EncoderModel`] is a trainable token-embedding table, mean pooling, an
//! optional seeded dropout on the pooled vector, one affine projector with a
//! GELU activation, and a final L2 normalisation.

mod checkpoint;
mod model;
mod tokenizer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use model::{
    gelu, gelu_derivative, EncoderConfig, EncoderGradients, EncoderModel, ForwardTrace,
};
pub use tokenizer::{
    lex, Lexeme, LexemeKind, TokenSequence, Tokenizer, DEFAULT_MAX_SEQUENCE_LENGTH, NUM,
    NUM_RESERVED, PAD, STR, UNKNOWN,
};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("token id {id} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: u32 },
    #[error("non-finite value in embedding")]
    NonFinite,
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Fixed-dimension embedding. Vectors produced by [`EncoderModel::encode`]
/// are unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Scales `values` to unit length. Returns `NonFinite` for a zero or
    /// non-finite input.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EncoderError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(EncoderError::NonFinite);
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// `1 - a·b` for unit vectors, clamped to `[0, 2]`.
pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EncoderError> {
    if a.dim() != b.dim() {
        return Err(EncoderError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(EncoderError::NonFinite);
    }
    Ok((1.0 - a.dot(b)).clamp(0.0, 2.0))
}

/// Anything that can turn a function's source into an embedding.
pub trait CodeEmbedder {
    fn embed(&self, code: &str) -> Result<EmbeddingVector, EncoderError>;
    fn dim(&self) -> usize;
}
