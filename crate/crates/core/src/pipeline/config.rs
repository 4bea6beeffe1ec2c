use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentationKind;
use crate::contrastive::TrainConfig;
use crate::eval::ProtocolConfig;
use crate::text::EmbeddingConfig;

pub const DEFAULT_LLM_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_SUBJECT_HINT: &str = "an item";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmBackendKind {
    /// Live when `LLM_API_KEY` is set, mock otherwise.
    #[default]
    Auto,
    Live,
    Mock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub kind: AugmentationKind,
    pub subject_hint: String,
    pub model_id: String,
    pub backend: LlmBackendKind,
    /// Chat-completions base URL; `LLM_BASE_URL` or the public endpoint when unset.
    pub base_url: Option<String>,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub cache_dir: PathBuf,
    pub max_in_flight: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteEncoderConfig {
    pub base_url: String,
    pub model_id: String,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_emb_key_env")]
    pub api_key_env: String,
}

fn default_dimension() -> usize {
    crate::text::DEFAULT_DIMENSION
}

fn default_batch() -> usize {
    64
}

fn default_in_flight() -> usize {
    4
}

fn default_emb_key_env() -> String {
    "EMB_API_KEY".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderBackend {
    Local(EmbeddingConfig),
    Remote(RemoteEncoderConfig),
}

impl EncoderBackend {
    pub fn dimension(&self) -> usize {
        match self {
            Self::Local(c) => c.dimension,
            Self::Remote(c) => c.dimension,
        }
    }
}

/// Validated configuration with defaults filled and paths made absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset: DatasetConfig,
    pub augmentation: AugmentationConfig,
    pub encoder: EncoderBackend,
    pub train: TrainConfig,
    pub eval: ProtocolConfig,
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    /// Sets the training and evaluation seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.eval.seed = seed;
        self
    }

    /// Minimal config around two dataset files, everything else default.
    pub fn for_dataset(nodes: impl Into<PathBuf>, edges: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        let output_dir = output_dir.into();
        Self {
            dataset: DatasetConfig {
                nodes: nodes.into(),
                edges: edges.into(),
                name: None,
            },
            augmentation: AugmentationConfig {
                kind: AugmentationKind::Shorten,
                subject_hint: DEFAULT_SUBJECT_HINT.into(),
                model_id: DEFAULT_LLM_MODEL.into(),
                backend: LlmBackendKind::Auto,
                base_url: None,
                api_key_env: "LLM_API_KEY".into(),
                cache_dir: output_dir.join("cache"),
                max_in_flight: 4,
            },
            encoder: EncoderBackend::Local(EmbeddingConfig::default()),
            train: TrainConfig::default(),
            eval: ProtocolConfig::default(),
            output_dir,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dataset: Option<DatasetConfig>,
    #[serde(default)]
    augmentation: RawAugmentation,
    #[serde(default)]
    encoder: RawEncoder,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    eval: ProtocolConfig,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KindField {
    One(AugmentationKind),
    Many(Vec<AugmentationKind>),
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAugmentation {
    kind: Option<KindField>,
    subject_hint: Option<String>,
    model_id: Option<String>,
    #[serde(default)]
    backend: LlmBackendKind,
    base_url: Option<String>,
    api_key_env: Option<String>,
    cache_dir: Option<PathBuf>,
    max_in_flight: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEncoder {
    local: Option<EmbeddingConfig>,
    remote: Option<RemoteEncoderConfig>,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Reads, checks and normalizes a pipeline config file. Relative paths are
/// taken relative to the file's directory.
pub fn validate_config(path: impl AsRef<Path>) -> Result<PipelineConfig, ConfigError> {
    validate_config_with(path, None)
}

/// As [`validate_config`], but `dataset` replaces the file's `[dataset]`
/// table, which may then be absent. Its paths are used as given.
pub fn validate_config_with(
    path: impl AsRef<Path>,
    dataset: Option<DatasetConfig>,
) -> Result<PipelineConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_with(&text, base, dataset).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<PipelineConfig, ConfigError> {
    parse_config_with(text, base_dir, None)
}

pub fn parse_config_with(
    text: &str,
    base_dir: &Path,
    dataset: Option<DatasetConfig>,
) -> Result<PipelineConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: PathBuf::from("<config>"),
        message: e.to_string(),
    })?;

    let dataset = match (dataset, raw.dataset) {
        (Some(d), _) => d,
        (None, Some(d)) => DatasetConfig {
            nodes: resolve(base_dir, d.nodes),
            edges: resolve(base_dir, d.edges),
            name: d.name,
        },
        (None, None) => return Err(field("dataset", "missing [dataset] table with nodes and edges")),
    };
    let (nodes, edges) = (dataset.nodes, dataset.edges);
    for (name, p) in [("dataset.nodes", &nodes), ("dataset.edges", &edges)] {
        if !p.is_file() {
            return Err(field(name, format!("{} does not exist", p.display())));
        }
    }
    let output_dir = resolve(base_dir, raw.output_dir.unwrap_or_else(|| PathBuf::from("out")));

    let a = raw.augmentation;
    let kind = match a.kind {
        None => AugmentationKind::Shorten,
        Some(KindField::One(k)) => k,
        Some(KindField::Many(ks)) if ks.len() == 1 => ks[0],
        Some(KindField::Many(ks)) => {
            return Err(field(
                "augmentation.kind",
                format!("exactly one augmentation kind per run, got {}", ks.len()),
            ))
        }
    };
    let max_in_flight = a.max_in_flight.unwrap_or(4);
    if max_in_flight == 0 {
        return Err(field("augmentation.max_in_flight", "must be at least 1"));
    }
    let augmentation = AugmentationConfig {
        kind,
        subject_hint: a.subject_hint.unwrap_or_else(|| DEFAULT_SUBJECT_HINT.into()),
        model_id: a.model_id.unwrap_or_else(|| DEFAULT_LLM_MODEL.into()),
        backend: a.backend,
        base_url: a.base_url,
        api_key_env: a.api_key_env.unwrap_or_else(|| "LLM_API_KEY".into()),
        cache_dir: a
            .cache_dir
            .map(|p| resolve(base_dir, p))
            .unwrap_or_else(|| output_dir.join("cache")),
        max_in_flight,
    };
    if augmentation.model_id.trim().is_empty() {
        return Err(field("augmentation.model_id", "must not be empty"));
    }

    let encoder = match (raw.encoder.local, raw.encoder.remote) {
        (Some(_), Some(_)) => {
            return Err(field(
                "encoder",
                "configure exactly one of encoder.local and encoder.remote",
            ))
        }
        (Some(c), None) => EncoderBackend::Local(c),
        (None, Some(r)) => EncoderBackend::Remote(r),
        (None, None) => EncoderBackend::Local(EmbeddingConfig::default()),
    };
    match &encoder {
        EncoderBackend::Local(c) => c.validate().map_err(|e| field("encoder.local", e.to_string()))?,
        EncoderBackend::Remote(r) => {
            if r.dimension == 0 || r.batch_size == 0 || r.max_in_flight == 0 {
                return Err(field(
                    "encoder.remote",
                    "dimension, batch_size and max_in_flight must be positive",
                ));
            }
        }
    }

    let mut train = raw.train;
    let mut eval = raw.eval;
    if let Some(seed) = raw.seed {
        train.seed = seed;
        eval.seed = seed;
    }
    let t = train.loss.temperature;
    if !(t.is_finite() && t > 0.0) {
        return Err(field("train.loss.temperature", format!("must be positive, got {t}")));
    }
    if train.batch_size < 2 {
        return Err(field("train.batch_size", "must be at least 2"));
    }
    if train.epochs == 0 {
        return Err(field("train.epochs", "must be at least 1"));
    }
    if !(train.learning_rate.is_finite() && train.learning_rate >= 0.0) {
        return Err(field("train.learning_rate", "must be non-negative"));
    }
    train.validate().map_err(|e| field("train", e.to_string()))?;
    if eval.repeats == 0 {
        return Err(field("eval.repeats", "must be at least 1"));
    }
    eval.validate().map_err(|e| field("eval", e.to_string()))?;

    Ok(PipelineConfig {
        dataset: DatasetConfig {
            nodes,
            edges,
            name: dataset.name,
        },
        augmentation,
        encoder,
        train,
        eval,
        output_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("nodes.jsonl"), "").unwrap();
        fs::write(dir.path().join("edges.jsonl"), "").unwrap();
        dir
    }

    const MINIMAL: &str = "[dataset]\nnodes = \"nodes.jsonl\"\nedges = \"edges.jsonl\"\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let dir = dataset_dir();
        let c = parse_config(MINIMAL, dir.path()).unwrap();
        assert_eq!(c.train.loss.temperature, 0.5);
        assert_eq!(c.train.encoder.layers, 2);
        assert_eq!(c.encoder.dimension(), 768);
        assert_eq!(c.train.encoder.out_dim, 256);
        assert_eq!(c.train.learning_rate, 2e-5);
        assert_eq!(c.train.batch_size, 512);
        assert_eq!(c.train.epochs, 10);
        assert_eq!(c.eval.repeats, 5);
        assert_eq!(c.augmentation.kind, AugmentationKind::Shorten);
        assert_eq!(c.dataset.nodes, dir.path().join("nodes.jsonl"));
        assert_eq!(c.output_dir, dir.path().join("out"));
    }

    fn field_of(err: ConfigError) -> String {
        match err {
            ConfigError::Field { field, .. } => field,
            other => panic!("expected a field error, got {other}"),
        }
    }

    #[test]
    fn dataset_table_can_come_from_the_caller() {
        let dir = dataset_dir();
        let given = DatasetConfig {
            nodes: dir.path().join("nodes.jsonl"),
            edges: dir.path().join("edges.jsonl"),
            name: None,
        };
        let c = parse_config_with("[train]\nepochs = 3\n", Path::new("/elsewhere"), Some(given.clone())).unwrap();
        assert_eq!((c.dataset, c.train.epochs), (given, 3));
        match parse_config("[train]\nepochs = 3\n", dir.path()) {
            Err(ConfigError::Field { field, .. }) => assert_eq!(field, "dataset"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_kinds_are_rejected_by_field() {
        let dir = dataset_dir();
        let text = format!("{MINIMAL}[augmentation]\nkind = [\"shorten\", \"expansion\"]\n");
        assert_eq!(
            field_of(parse_config(&text, dir.path()).unwrap_err()),
            "augmentation.kind"
        );
    }

    #[test]
    fn negative_temperature_is_rejected() {
        let dir = dataset_dir();
        let text = format!("{MINIMAL}[train.loss]\ntemperature = -1.0\n");
        assert_eq!(
            field_of(parse_config(&text, dir.path()).unwrap_err()),
            "train.loss.temperature"
        );
    }

    #[test]
    fn unknown_keys_and_missing_files_fail() {
        let dir = dataset_dir();
        let text = format!("{MINIMAL}[train]\nbatchsize = 3\n");
        assert!(matches!(
            parse_config(&text, dir.path()),
            Err(ConfigError::Parse { .. })
        ));
        let text = "[dataset]\nnodes = \"missing.jsonl\"\nedges = \"edges.jsonl\"\n";
        assert_eq!(field_of(parse_config(text, dir.path()).unwrap_err()), "dataset.nodes");
    }

    #[test]
    fn encoder_backends_are_exclusive() {
        let dir = dataset_dir();
        let text = format!(
            "{MINIMAL}[encoder.local]\ndimension = 64\n[encoder.remote]\nbase_url = \"http://x\"\nmodel_id = \"m\"\n"
        );
        assert_eq!(field_of(parse_config(&text, dir.path()).unwrap_err()), "encoder");
        let text = format!("{MINIMAL}[encoder.remote]\nbase_url = \"http://x\"\nmodel_id = \"m\"\n");
        let c = parse_config(&text, dir.path()).unwrap();
        assert!(matches!(c.encoder, EncoderBackend::Remote(ref r) if r.dimension == 768));
    }

    #[test]
    fn top_level_seed_reaches_both_stages() {
        let dir = dataset_dir();
        let text = format!("seed = 42\n{MINIMAL}[train]\nbatch_size = 64\nnegatives_per_target = 1\n");
        assert!(parse_config(&text, dir.path()).is_err());
        let text = format!("seed = 42\n{MINIMAL}[train]\nbatch_size = 64\n[train.loss]\nnegatives_per_target = 8\n");
        let c = parse_config(&text, dir.path()).unwrap();
        assert_eq!((c.train.seed, c.eval.seed), (42, 42));
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.with_seed(7).eval.seed, 7);
    }
}
