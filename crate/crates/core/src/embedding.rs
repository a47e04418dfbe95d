//! Similarity geometry: stored vectors are unit-normalized so cosine
//! similarity reduces to a dot product.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;
use thiserror::Error;

use crate::digest::fnv1a64;
use crate::tokenize;

/// Tolerance on the L2 norm of a stored vector.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Smallest dimension accepted by [`hashed_bow_embed`].
pub const MIN_HASHED_DIMENSION: usize = 8;

/// Dimension used by the default hashed embedder.
pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no tokens to embed")]
    EmptyText,
    #[error("embedding dimension {0} is below the minimum of {MIN_HASHED_DIMENSION}")]
    DimensionTooSmall(usize),
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("vector norm {0} is not 1")]
    NotNormalized(f64),
    #[error("embedding backend failed: {0}")]
    Backend(String),
}

/// A unit-length, finite embedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length.
    pub fn normalize(mut values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroVector);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self(values))
    }

    /// Accepts values that are already unit length (within [`NORM_TOLERANCE`]),
    /// without rescaling them. Used when reading persisted vectors back.
    pub fn from_unit(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(EmbeddingError::NotNormalized(norm));
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    libm::sqrt(values.iter().map(|v| v * v).sum())
}

/// Maps text to embeddings. Implementations must be deterministic: equal
/// text yields an equal vector, and the dimension never changes.
pub trait Embedder {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        (**self).embed(text)
    }
}

impl<E: Embedder + ?Sized> Embedder for alloc::boxed::Box<E> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        (**self).embed(text)
    }
}

impl<E: Embedder + ?Sized> Embedder for alloc::sync::Arc<E> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        (**self).embed(text)
    }
}

/// Dot product of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dimension(),
            found: b.dimension(),
        });
    }
    Ok(dot(a.as_slice(), b.as_slice()).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bucket a lowercased token falls into under the hashed embedder.
pub fn hashed_bucket(token: &str, dimension: usize) -> usize {
    (fnv1a64(token.as_bytes()) % dimension as u64) as usize
}

/// Hashed bag-of-words: each lowercased whitespace token adds one to the
/// bucket its FNV-1a hash selects, and the count vector is L2-normalized.
pub fn hashed_bow_embed(text: &str, dimension: usize) -> Result<EmbeddingVector, EmbeddingError> {
    if dimension < MIN_HASHED_DIMENSION {
        return Err(EmbeddingError::DimensionTooSmall(dimension));
    }
    let mut counts = vec![0.0_f64; dimension];
    let mut any = false;
    for token in tokenize::lowercase_tokens(text) {
        counts[hashed_bucket(&token, dimension)] += 1.0;
        any = true;
    }
    if !any {
        return Err(EmbeddingError::EmptyText);
    }
    EmbeddingVector::normalize(counts)
}

/// [`Embedder`] backed by [`hashed_bow_embed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBowEmbedder {
    dimension: usize,
}

impl HashedBowEmbedder {
    pub fn new(dimension: usize) -> Result<Self, EmbeddingError> {
        if dimension < MIN_HASHED_DIMENSION {
            return Err(EmbeddingError::DimensionTooSmall(dimension));
        }
        Ok(Self { dimension })
    }
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl Embedder for HashedBowEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        hashed_bow_embed(text, self.dimension)
    }
}
