//! End-to-end runs from one TOML file: augment → encode → train → eval →
//! report, with digest-keyed stage reuse and a run manifest.

mod config;
mod run;

pub use config::{
    parse_config, parse_config_with, validate_config, validate_config_with, AugmentationConfig, ConfigError,
    DatasetConfig, EncoderBackend, LlmBackendKind, PipelineConfig, RemoteEncoderConfig, DEFAULT_LLM_MODEL,
    DEFAULT_SUBJECT_HINT,
};
pub use run::{
    encode_views, llm_backend, read_metrics, run_adaptor_sweep, run_pipeline, AdaptorSetting, FileDigest, RunManifest,
    StageRecord, StageStatus, SweepOutcome, AUGMENTED_FILE, CHECKPOINT_FILE, EMBEDDINGS_FILE, FEATURES_AUG_FILE,
    FEATURES_FILE, MANIFEST_FILE, METRICS_FILE, REPORT_CSV_FILE, REPORT_MD_FILE, SWEEP_CSV_FILE, SWEEP_MD_FILE,
    TRACE_FILE,
};

use std::path::PathBuf;

use crate::augment::AugmentError;
use crate::contrastive::ContrastiveError;
use crate::encoder::EncoderError;
use crate::eval::EvalError;
use crate::numerics::NumericsError;
use crate::tag::GraphError;
use crate::text::EncodeError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_PARTIAL_AUGMENTATION: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Train(#[from] ContrastiveError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{} changed since it was recorded", .0.display())]
    DigestMismatch(PathBuf),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage} failed")]
    Stage {
        stage: String,
        #[source]
        source: StageError,
    },
}

impl PipelineError {
    pub fn stage(stage: &str, source: StageError) -> Self {
        Self::Stage {
            stage: stage.to_string(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 transport, 4 numeric, 5 partial
    /// augmentation, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Stage { source, .. } => stage_exit_code(source),
        }
    }
}

pub fn stage_exit_code(e: &StageError) -> i32 {
    match e {
        StageError::Graph(_) => EXIT_CONFIG,
        StageError::Augment(AugmentError::Partial { .. }) => EXIT_PARTIAL_AUGMENTATION,
        StageError::Augment(a) if a.is_transport() => EXIT_TRANSPORT,
        StageError::Encode(EncodeError::Http(_)) => EXIT_TRANSPORT,
        StageError::Encode(EncodeError::Config(_)) => EXIT_CONFIG,
        StageError::Train(t) => match t {
            ContrastiveError::NonFiniteLoss { .. }
            | ContrastiveError::Numerics(_)
            | ContrastiveError::Encoder(EncoderError::Numerics(_)) => EXIT_NUMERIC,
            ContrastiveError::Config(_) => EXIT_CONFIG,
            _ => 1,
        },
        StageError::Eval(EvalError::NonFinite(_) | EvalError::Numerics(NumericsError::NonFiniteGradient { .. })) => {
            EXIT_NUMERIC
        }
        StageError::Eval(EvalError::Config(_) | EvalError::SingleClassTrain | EvalError::Split(_)) => EXIT_CONFIG,
        _ => 1,
    }
}
