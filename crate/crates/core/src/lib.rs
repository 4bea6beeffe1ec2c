//! Graph contrastive learning on text-attributed graphs, where the second
//! view of every node comes from rewriting its text with a language model.
//!
//! The pipeline runs augment → encode → train → eval:
//!
//! * [`augment`] renders prompts and calls a chat-completions endpoint (or a
//!   deterministic mock), caching every response by content digest.
//! * [`text`] turns node texts into frozen feature vectors.
//! * [`encoder`] and [`contrastive`] train an adaptor plus GCN/GraphSAGE stack
//!   with an InfoNCE objective on the [`numerics`] autodiff tape.
//! * [`eval`] scores the frozen embeddings with a linear probe over repeated
//!   random splits.
//! * [`pipeline`] wires the stages together from one TOML file.

pub mod augment;
pub mod cache;
pub mod contrastive;
pub mod digest;
pub mod encoder;
pub mod eval;
pub mod http;
pub mod numerics;
pub mod pipeline;
pub mod tag;
pub mod text;

pub use augment::{AugmentationKind, AugmentedCorpus};
pub use contrastive::{train, LossConfig, TrainConfig, TrainResult};
pub use encoder::{AdaptorConfig, EncoderKind, EncoderStack};
pub use eval::{run_protocol, MetricsReport};

pub use numerics::{CsrMatrix, DenseMatrix};
pub use tag::{SplitAssignment, TextAttributedGraph};
pub use text::{EmbeddingConfig, FeatureMatrix};
