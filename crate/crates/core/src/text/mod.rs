//! Text to fixed-width feature vectors. The encoder is frozen: it has no
//! trainable state, so the same text always maps to the same row.

mod hashing;
mod remote;

pub use hashing::{encode_corpus, encode_text, hashed_counts, seeded_fnv1a, EmbeddingConfig, DEFAULT_DIMENSION};
pub use remote::{remote_encode, EmbeddingClient};

use crate::cache::CacheError;
use crate::http::HttpError;

/// `N x d` node feature matrix; row `n` embeds node `n`.
pub type FeatureMatrix = crate::numerics::DenseMatrix;

#[derive(Debug, thiserror::Error)]
pub enum EncodeError {
    #[error("invalid embedding config: {0}")]
    Config(String),
    #[error("embedding service returned dimension {actual}, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("malformed embedding response: {0}")]
    MalformedResponse(String),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}
