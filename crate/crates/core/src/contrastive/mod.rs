//! Contrastive training: cosine-similarity InfoNCE between the original and
//! augmented view of each node, mini-batch scheduling, and the Adam loop.

mod batching;
mod loss;
mod train;

pub use batching::{plan_batches, sample_negatives};
pub use loss::{batch_info_nce, cosine_sim, info_nce, info_nce_value, LossConfig, Negatives};
pub use train::{
    batch_negatives, contrastive_loss, contrastive_step, embed, init_stack, read_trace_csv, train, write_trace_csv,
    EpochStats, StepOutput, TrainConfig, TrainMetadata, TrainResult,
};

use crate::encoder::EncoderError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum ContrastiveError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("at least one negative is required")]
    NoNegatives,
    #[error("requested {requested} negatives but only {available} candidates")]
    TooManyNegatives { requested: usize, available: usize },
    #[error("node {0} is not in the batch")]
    TargetNotInBatch(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss at epoch {epoch}, step {step}: {message}")]
    NonFiniteLoss { epoch: usize, step: usize, message: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
