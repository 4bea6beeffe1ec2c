use serde::{Deserialize, Serialize};

use super::EncodeError;
use crate::numerics::DenseMatrix;

pub const DEFAULT_DIMENSION: usize = 768;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Settings for the signed feature-hashing encoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dimension: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub lowercase: bool,
    pub hash_seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
            ngram_min: 1,
            ngram_max: 2,
            lowercase: true,
            hash_seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<(), EncodeError> {
        if self.dimension == 0 {
            return Err(EncodeError::Config("dimension must be at least 1".into()));
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(EncodeError::Config(format!(
                "need 1 <= ngram_min <= ngram_max, got {}..{}",
                self.ngram_min, self.ngram_max
            )));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a over the seed's 8 little-endian bytes followed by `bytes`.
pub fn seeded_fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    seed.to_le_bytes()
        .iter()
        .chain(bytes)
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Unnormalized signed counts. Each n-gram (tokens joined by one space) adds
/// −1 if the top bit of its hash is set and +1 otherwise, at `hash mod d`.
pub fn hashed_counts(text: &str, config: &EmbeddingConfig) -> Vec<f64> {
    let mut v = vec![0.0; config.dimension];
    let tokens: Vec<String> = text
        .split_whitespace()
        .map(|t| {
            if config.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect();
    for n in config.ngram_min..=config.ngram_max {
        for window in tokens.windows(n) {
            let gram = window.join(" ");
            let h = seeded_fnv1a(config.hash_seed, gram.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % config.dimension as u64) as usize] += sign;
        }
    }
    v
}

/// Unit-norm hashed embedding; empty text gives the zero vector.
pub fn encode_text(text: &str, config: &EmbeddingConfig) -> Vec<f64> {
    let mut v = hashed_counts(text, config);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub fn encode_corpus<S: AsRef<str>>(texts: &[S], config: &EmbeddingConfig) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(texts.len(), config.dimension);
    for (r, t) in texts.iter().enumerate() {
        m.row_mut(r).copy_from_slice(&encode_text(t.as_ref(), config));
    }
    m
}
