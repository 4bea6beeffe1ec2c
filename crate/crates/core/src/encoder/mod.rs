//! The graph encoder: adjacency normalization, an optional linear adaptor on
//! the frozen text features, and `K` GCN or GraphSAGE-mean layers.

mod adjacency;
mod checkpoint;
mod stack;

pub use adjacency::{mean_aggregation, normalize_adjacency};
pub use checkpoint::{load_checkpoint, save_checkpoint, sidecar_path, CheckpointSidecar, TensorInfo};
pub use stack::{
    adaptor_forward, encode_nodes, gcn_forward, glorot_bound, init_params, propagation_matrix, sage_forward,
    AdaptorConfig, BoundStack, EncoderConfig, EncoderDims, EncoderKind, EncoderStack, GraphLayer, Linear,
    DEFAULT_HIDDEN_DIM, DEFAULT_OUTPUT_DIM,
};

use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("adjacency matrix is not symmetric")]
    Asymmetric,
    #[error("adjacency matrix has self-loops")]
    NonZeroDiagonal,
    #[error("encoder stack kind does not match the requested forward pass")]
    KindMismatch,
    #[error("invalid encoder configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
