use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{EncoderBackend, LlmBackendKind, PipelineConfig, PipelineError, StageError};
use crate::augment::{augment_graph, cache_key, AugmentedCorpus, LlmBackend, LlmClient, DEFAULT_LLM_BASE_URL};
use crate::cache::CacheStore;
use crate::contrastive::{train, write_trace_csv, TrainConfig};
use crate::digest::{file_sha256, sha256_hex};
use crate::encoder::{save_checkpoint, sidecar_path, AdaptorConfig};
use crate::eval::{render_sweep_csv, render_sweep_markdown, run_protocol, write_report, MetricsReport, ReportFormat};
use crate::http::{RetryPolicy, UreqTransport};
use crate::numerics::io::{load_matrix, save_matrix};
use crate::tag::{load_graph, GraphError, TextAttributedGraph};
use crate::text::{encode_corpus, remote_encode, EmbeddingClient, FeatureMatrix};

pub const AUGMENTED_FILE: &str = "augmented.jsonl";
pub const FEATURES_FILE: &str = "features.lgx";
pub const FEATURES_AUG_FILE: &str = "features_aug.lgx";
pub const EMBEDDINGS_FILE: &str = "embeddings.lgx";
pub const CHECKPOINT_FILE: &str = "checkpoint.lgxp";
pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_MD_FILE: &str = "report.md";
pub const SWEEP_CSV_FILE: &str = "sweep.csv";
pub const SWEEP_MD_FILE: &str = "sweep.md";
pub const MANIFEST_FILE: &str = "manifest.json";
const STAMP_DIR: &str = ".stamps";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Executed,
    Reused,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub started_at: DateTime<Utc>,
    pub config: PipelineConfig,
    /// Model id the augmentation actually used (`mock` for the offline backend).
    pub llm_model: String,
    pub llm_requests: u64,
    pub embedding_requests: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub cache_entries: Vec<FileDigest>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn executed(&self) -> Vec<&str> {
        self.stages
            .iter()
            .filter(|s| s.status == StageStatus::Executed)
            .map(|s| s.name.as_str())
            .collect()
    }
}

/// One adaptor configuration of a sweep, labelled as in the report.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptorSetting {
    pub label: String,
    pub adaptor: AdaptorConfig,
}

impl AdaptorSetting {
    /// No adaptor, then output sizes 256, 512 and 768.
    pub fn standard_sweep() -> Vec<Self> {
        std::iter::once(Self {
            label: "Default".into(),
            adaptor: AdaptorConfig::default(),
        })
        .chain([256, 512, 768].into_iter().map(|d| Self {
            label: d.to_string(),
            adaptor: AdaptorConfig::with_out_dim(d),
        }))
        .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub manifest: RunManifest,
    pub rows: Vec<(String, MetricsReport)>,
}

#[derive(Serialize, Deserialize)]
struct Stamp {
    stage: String,
    key: String,
    outputs: Vec<FileDigest>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> StageError + '_ {
    move |e| StageError::Io(format!("{}: {e}", path.display()))
}

fn digest_of(path: &Path) -> Result<String, StageError> {
    file_sha256(path).map_err(io_err(path))
}

fn key_of(value: serde_json::Value) -> String {
    sha256_hex(value.to_string().as_bytes())
}

/// Builds the augmentation backend, falling back to the mock when `auto`
/// finds no API key.
pub fn llm_backend(cfg: &super::AugmentationConfig) -> LlmBackend {
    let key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
    let live = match cfg.backend {
        LlmBackendKind::Mock => false,
        LlmBackendKind::Live => true,
        LlmBackendKind::Auto => {
            if key.is_none() {
                log::warn!(
                    "{} is not set: using the MOCK augmentation backend; results do not reflect a language model",
                    cfg.api_key_env
                );
            }
            key.is_some()
        }
    };
    if !live {
        return LlmBackend::Mock;
    }
    let base = cfg
        .base_url
        .clone()
        .or_else(|| std::env::var("LLM_BASE_URL").ok())
        .unwrap_or_else(|| DEFAULT_LLM_BASE_URL.into());
    LlmBackend::Live(LlmClient::new(
        Arc::new(UreqTransport::default()),
        base,
        &cfg.model_id,
        key,
        RetryPolicy::default(),
    ))
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    graph: OnceCell<TextAttributedGraph>,
    stages: Vec<StageRecord>,
    outputs: BTreeMap<PathBuf, String>,
    llm_model: String,
    llm_requests: u64,
    embedding_requests: u64,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a PipelineConfig) -> Result<Self, PipelineError> {
        let out = cfg.output_dir.clone();
        fs::create_dir_all(out.join(STAMP_DIR))
            .map_err(|e| PipelineError::stage("setup", StageError::Io(format!("{}: {e}", out.display()))))?;
        let manifest = out.join(MANIFEST_FILE);
        if manifest.exists() {
            fs::remove_file(&manifest)
                .map_err(|e| PipelineError::stage("setup", StageError::Io(format!("{}: {e}", manifest.display()))))?;
        }
        Ok(Self {
            cfg,
            out,
            graph: OnceCell::new(),
            stages: Vec::new(),
            outputs: BTreeMap::new(),
            llm_model: String::new(),
            llm_requests: 0,
            embedding_requests: 0,
        })
    }

    fn graph(&self) -> Result<&TextAttributedGraph, StageError> {
        if let Some(g) = self.graph.get() {
            return Ok(g);
        }
        let g = load_graph(&self.cfg.dataset.nodes, &self.cfg.dataset.edges)?;
        Ok(self.graph.get_or_init(|| g))
    }

    /// Runs `body` unless a stamp with the same key names outputs that are
    /// all present with their recorded digests.
    fn stage(
        &mut self,
        name: &str,
        key: String,
        outputs: &[PathBuf],
        body: impl FnOnce(&mut Self) -> Result<(), StageError>,
    ) -> Result<(), PipelineError> {
        let started = Instant::now();
        let stamp_path = self
            .out
            .join(STAMP_DIR)
            .join(format!("{}.json", name.replace(['/', '@'], "-")));
        let reused = self
            .reusable(&stamp_path, &key)
            .map_err(|e| PipelineError::stage(name, e))?;
        let status = if reused {
            log::info!("stage {name}: reusing outputs");
            StageStatus::Reused
        } else {
            log::info!("stage {name}: running");
            body(self).map_err(|e| PipelineError::stage(name, e))?;
            let digests = outputs
                .iter()
                .map(|p| {
                    Ok(FileDigest {
                        path: p.clone(),
                        sha256: digest_of(p)?,
                    })
                })
                .collect::<Result<Vec<_>, StageError>>()
                .map_err(|e| PipelineError::stage(name, e))?;
            let stamp = Stamp {
                stage: name.to_string(),
                key,
                outputs: digests,
            };
            fs::write(
                &stamp_path,
                serde_json::to_vec_pretty(&stamp).expect("stamp serializes"),
            )
            .map_err(|e| PipelineError::stage(name, StageError::Io(format!("{}: {e}", stamp_path.display()))))?;
            StageStatus::Executed
        };
        for p in outputs.iter().chain([&stamp_path]) {
            let d = digest_of(p).map_err(|e| PipelineError::stage(name, e))?;
            self.outputs.insert(p.clone(), d);
        }
        self.stages.push(StageRecord {
            name: name.to_string(),
            status,
            seconds: started.elapsed().as_secs_f64(),
        });
        Ok(())
    }

    fn reusable(&self, stamp_path: &Path, key: &str) -> Result<bool, StageError> {
        let Ok(bytes) = fs::read(stamp_path) else {
            return Ok(false);
        };
        let Ok(stamp) = serde_json::from_slice::<Stamp>(&bytes) else {
            return Ok(false);
        };
        if stamp.key != key {
            return Ok(false);
        }
        for out in &stamp.outputs {
            if !out.path.is_file() {
                return Ok(false);
            }
        }
        for out in &stamp.outputs {
            if digest_of(&out.path)? != out.sha256 {
                return Err(StageError::DigestMismatch(out.path.clone()));
            }
        }
        Ok(true)
    }

    fn augment(&mut self) -> Result<(), PipelineError> {
        let a = &self.cfg.augmentation;
        let backend = llm_backend(a);
        self.llm_model = backend.model_id().to_string();
        let nodes_digest = digest_of(&self.cfg.dataset.nodes).map_err(|e| PipelineError::stage("augment", e))?;
        let key = key_of(json!({
            "stage": "augment",
            "nodes": nodes_digest,
            "kind": a.kind,
            "subject_hint": a.subject_hint,
            "model": backend.model_id(),
        }));
        let out = self.out.join(AUGMENTED_FILE);
        let max_in_flight = a.max_in_flight;
        self.stage("augment", key, std::slice::from_ref(&out), |run| {
            let a = &run.cfg.augmentation;
            let cache = CacheStore::open(&a.cache_dir).map_err(crate::augment::AugmentError::from)?;
            let corpus = augment_graph(&backend, a.kind, &a.subject_hint, run.graph()?, &cache, max_in_flight)?;
            corpus.save_jsonl(&out).map_err(io_err(&out))?;
            Ok(())
        })?;
        self.llm_requests += backend.request_count();
        Ok(())
    }

    fn encode(&mut self) -> Result<(), PipelineError> {
        let err = |e| PipelineError::stage("encode", e);
        let key = key_of(json!({
            "stage": "encode",
            "nodes": digest_of(&self.cfg.dataset.nodes).map_err(err)?,
            "augmented": digest_of(&self.out.join(AUGMENTED_FILE)).map_err(err)?,
            "encoder": self.cfg.encoder,
        }));
        let (f, fa) = (self.out.join(FEATURES_FILE), self.out.join(FEATURES_AUG_FILE));
        self.stage("encode", key, &[f.clone(), fa.clone()], |run| {
            let corpus_path = run.out.join(AUGMENTED_FILE);
            let corpus = AugmentedCorpus::load_jsonl(&corpus_path)?;
            let graph = run.graph()?;
            if corpus.records.len() != graph.node_count() {
                return Err(StageError::Io(format!(
                    "{} has {} records for {} nodes",
                    corpus_path.display(),
                    corpus.records.len(),
                    graph.node_count()
                )));
            }
            let aug_texts = corpus.output_texts();
            let cache_dir = run.cfg.augmentation.cache_dir.join("embeddings");
            let (mut views, requests) = encode_views(&run.cfg.encoder, &cache_dir, &[graph.texts(), &aug_texts])?;
            run.embedding_requests += requests;
            let hs = views.pop().expect("two views");
            let h = views.pop().expect("two views");
            save_matrix(&f, &h).map_err(io_err(&f))?;
            save_matrix(&fa, &hs).map_err(io_err(&fa))?;
            Ok(())
        })
    }

    /// Train, eval and report into `dir` for one training configuration.
    fn train_eval_report(
        &mut self,
        suffix: &str,
        dir: &Path,
        train_cfg: &TrainConfig,
    ) -> Result<MetricsReport, PipelineError> {
        let name = |s: &str| {
            if suffix.is_empty() {
                s.to_string()
            } else {
                format!("{s}@{suffix}")
            }
        };
        let train_name = name("train");
        let err = |e| PipelineError::stage("train", e);
        fs::create_dir_all(dir).map_err(|e| err(StageError::Io(format!("{}: {e}", dir.display()))))?;

        let key = key_of(json!({
            "stage": "train",
            "nodes": digest_of(&self.cfg.dataset.nodes).map_err(err)?,
            "edges": digest_of(&self.cfg.dataset.edges).map_err(err)?,
            "features": digest_of(&self.out.join(FEATURES_FILE)).map_err(err)?,
            "features_aug": digest_of(&self.out.join(FEATURES_AUG_FILE)).map_err(err)?,
            "train": train_cfg,
        }));
        let emb = dir.join(EMBEDDINGS_FILE);
        let ckpt = dir.join(CHECKPOINT_FILE);
        let trace = dir.join(TRACE_FILE);
        let outputs = [emb.clone(), ckpt.clone(), sidecar_path(&ckpt), trace.clone()];
        self.stage(&train_name, key, &outputs, |run| {
            let h = load_features(&run.out.join(FEATURES_FILE))?;
            let hs = load_features(&run.out.join(FEATURES_AUG_FILE))?;
            let result = train(run.graph()?, &h, &hs, train_cfg)?;
            save_matrix(&emb, &result.h_final).map_err(io_err(&emb))?;
            let meta = serde_json::to_value(&result.metadata).expect("metadata serializes");
            save_checkpoint(&ckpt, &result.stack, meta).map_err(crate::contrastive::ContrastiveError::from)?;
            write_trace_csv(&trace, &result.loss_trace)?;
            Ok(())
        })?;

        let eval_name = name("eval");
        let err = |e| PipelineError::stage("eval", e);
        let key = key_of(json!({
            "stage": "eval",
            "nodes": digest_of(&self.cfg.dataset.nodes).map_err(err)?,
            "embeddings": digest_of(&emb).map_err(err)?,
            "eval": self.cfg.eval,
        }));
        let metrics = dir.join(METRICS_FILE);
        self.stage(&eval_name, key, std::slice::from_ref(&metrics), |run| {
            let h = load_features(&emb)?;
            let labels = run.graph()?.labels().ok_or(GraphError::MissingLabels)?;
            let report = run_protocol(&h, labels, &run.cfg.eval)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            fs::write(&metrics, text + "\n").map_err(io_err(&metrics))?;
            Ok(())
        })?;

        let report_name = name("report");
        let err = |e| PipelineError::stage("report", e);
        let key = key_of(json!({"stage": "report", "metrics": digest_of(&metrics).map_err(err)?}));
        let (csv_path, md_path) = (dir.join(REPORT_CSV_FILE), dir.join(REPORT_MD_FILE));
        self.stage(&report_name, key, &[csv_path.clone(), md_path.clone()], |_| {
            let report = read_metrics(&metrics)?;
            write_report(&report, &csv_path, ReportFormat::Csv)?;
            write_report(&report, &md_path, ReportFormat::Markdown)?;
            Ok(())
        })?;
        read_metrics(&metrics).map_err(|e| PipelineError::stage("report", e))
    }

    fn finish(self, started_at: DateTime<Utc>, config_file: Option<&Path>) -> Result<RunManifest, PipelineError> {
        let err = |e| PipelineError::stage("manifest", e);
        let mut inputs = Vec::new();
        for p in config_file
            .into_iter()
            .chain([self.cfg.dataset.nodes.as_path(), self.cfg.dataset.edges.as_path()])
        {
            inputs.push(FileDigest {
                path: p.to_path_buf(),
                sha256: digest_of(p).map_err(err)?,
            });
        }
        let mut cache_entries = Vec::new();
        if let Some(graph) = self.graph.get() {
            let a = &self.cfg.augmentation;
            let model = if self.llm_model.is_empty() {
                &a.model_id
            } else {
                &self.llm_model
            };
            for text in graph.texts() {
                let p = a.cache_dir.join(format!("{}.json", cache_key(a.kind, model, text)));
                if p.is_file() {
                    cache_entries.push(FileDigest {
                        sha256: digest_of(&p).map_err(err)?,
                        path: p,
                    });
                }
            }
            cache_entries.sort();
            cache_entries.dedup();
        }
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            config: self.cfg.clone(),
            llm_model: self.llm_model,
            llm_requests: self.llm_requests,
            embedding_requests: self.embedding_requests,
            inputs,
            outputs: self
                .outputs
                .into_iter()
                .map(|(path, sha256)| FileDigest { path, sha256 })
                .collect(),
            cache_entries,
            stages: self.stages,
        };
        let path = self.out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| err(StageError::Io(format!("{}: {e}", path.display()))))?;
        Ok(manifest)
    }
}

/// Encodes each text list with the configured backend. Remote vectors are
/// cached under `cache_dir`; the count is the number of HTTP requests sent.
pub fn encode_views(
    backend: &EncoderBackend,
    cache_dir: &Path,
    views: &[&[String]],
) -> Result<(Vec<FeatureMatrix>, u64), StageError> {
    match backend {
        EncoderBackend::Local(c) => Ok((views.iter().map(|t| encode_corpus(t, c)).collect(), 0)),
        EncoderBackend::Remote(r) => {
            let key = std::env::var(&r.api_key_env)
                .or_else(|_| std::env::var("LLM_API_KEY"))
                .ok();
            let cache = CacheStore::open(cache_dir).map_err(crate::text::EncodeError::from)?;
            let client = EmbeddingClient::new(
                Arc::new(UreqTransport::default()),
                &r.base_url,
                &r.model_id,
                key,
                RetryPolicy::default(),
            )
            .with_batch_size(r.batch_size)
            .with_max_in_flight(r.max_in_flight)
            .with_cache(cache);
            let out = views
                .iter()
                .map(|t| remote_encode(&client, t, r.dimension))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((out, client.request_count()))
        }
    }
}

fn load_features(path: &Path) -> Result<FeatureMatrix, StageError> {
    load_matrix(path).map_err(io_err(path))
}

pub fn read_metrics(path: &Path) -> Result<MetricsReport, StageError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| StageError::Io(format!("{}: {e}", path.display())))
}

/// Runs augment → encode → train → eval → report, reusing any stage whose
/// inputs are unchanged, and writes the manifest last.
pub fn run_pipeline(config: &PipelineConfig, config_file: Option<&Path>) -> Result<RunManifest, PipelineError> {
    let started_at = Utc::now().trunc_subsecs(3);
    let mut run = Run::new(config)?;
    run.augment()?;
    run.encode()?;
    let out = run.out.clone();
    run.train_eval_report("", &out, &config.train)?;
    run.finish(started_at, config_file)
}

/// Shares augment and encode, then trains and evaluates once per adaptor
/// setting under `sweep/<label>/` and writes one table row per setting.
pub fn run_adaptor_sweep(
    config: &PipelineConfig,
    settings: &[AdaptorSetting],
    config_file: Option<&Path>,
) -> Result<SweepOutcome, PipelineError> {
    if settings.is_empty() {
        return Err(PipelineError::Config(super::ConfigError::Field {
            field: "adaptor sweep".into(),
            message: "no settings given".into(),
        }));
    }
    let started_at = Utc::now().trunc_subsecs(3);
    let mut run = Run::new(config)?;
    run.augment()?;
    run.encode()?;
    let mut rows = Vec::with_capacity(settings.len());
    for s in settings {
        let dir = run.out.join("sweep").join(&s.label);
        let train_cfg = TrainConfig {
            adaptor: s.adaptor,
            ..config.train.clone()
        };
        let report = run.train_eval_report(&s.label, &dir, &train_cfg)?;
        rows.push((s.label.clone(), report));
    }
    let err = |e| PipelineError::stage("report", e);
    let csv_path = run.out.join(SWEEP_CSV_FILE);
    let md_path = run.out.join(SWEEP_MD_FILE);
    let csv = render_sweep_csv("adaptor", &rows).map_err(|e| err(e.into()))?;
    fs::write(&csv_path, csv).map_err(io_err(&csv_path)).map_err(err)?;
    fs::write(&md_path, render_sweep_markdown("Adaptor", &rows))
        .map_err(io_err(&md_path))
        .map_err(err)?;
    for p in [csv_path, md_path] {
        let d = digest_of(&p).map_err(err)?;
        run.outputs.insert(p, d);
    }
    let manifest = run.finish(started_at, config_file)?;
    Ok(SweepOutcome { manifest, rows })
}
