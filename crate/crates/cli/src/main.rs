use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use textgcl::augment::{augment_graph, AugmentationKind, AugmentedCorpus};
use textgcl::cache::CacheStore;
use textgcl::contrastive::{train, write_trace_csv};
use textgcl::encoder::save_checkpoint;
use textgcl::eval::{render_markdown, run_protocol, write_report, ReportFormat};
use textgcl::numerics::io::{load_matrix, save_matrix};
use textgcl::pipeline::{
    encode_views, llm_backend, read_metrics, run_adaptor_sweep, run_pipeline, validate_config, validate_config_with,
    AdaptorSetting, ConfigError, DatasetConfig, EncoderBackend, LlmBackendKind, PipelineConfig, PipelineError,
    StageError, METRICS_FILE, REPORT_CSV_FILE, REPORT_MD_FILE, SWEEP_MD_FILE,
};
use textgcl::tag::{generate_synthetic, load_graph, load_nodes, save_graph, GraphError, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "textgcl",
    version,
    about = "Contrastive learning on text-attributed graphs with LLM text views"
)]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stochastic-block-model graph with class-dependent texts.
    Synth(SynthArgs),
    /// Rewrite every node text with the language model.
    Augment(AugmentArgs),
    /// Encode node texts, or an augmented corpus, into a feature matrix.
    Encode(EncodeArgs),
    /// Train the graph encoder contrastively and write final embeddings.
    Train(TrainArgs),
    /// Linear-probe evaluation over repeated random splits.
    Eval(EvalArgs),
    /// Render a metrics file as CSV or markdown.
    Report(ReportArgs),
    /// Run the full pipeline from `--config`.
    Run(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// SyntheticSpec as TOML; the 200-node desk fixture when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out_nodes: PathBuf,
    #[arg(long)]
    out_edges: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Auto,
    Live,
    Mock,
}

impl From<Backend> for LlmBackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Auto => Self::Auto,
            Backend::Live => Self::Live,
            Backend::Mock => Self::Mock,
        }
    }
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    kind: Option<AugmentationKind>,
    /// Fills the prompt's "description of {subject}", e.g. "a book".
    #[arg(long)]
    subject: Option<String>,
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// Chat-completions base URL.
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    nodes: PathBuf,
    /// Encode this augmented corpus instead of the node texts.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out_embeddings: PathBuf,
    #[arg(long)]
    out_checkpoint: PathBuf,
    #[arg(long)]
    out_trace: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    /// Also write the full metrics record as JSON.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Metrics JSON; defaults to the config's output directory.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
}

#[derive(Args)]
struct RunArgs {
    /// Train and evaluate once per adaptor width (none, 256, 512, 768).
    #[arg(long)]
    adaptor_sweep: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn stage_err<E: Into<StageError>>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::stage(stage, e.into())
}

fn io_stage<'a>(stage: &'static str, path: &'a Path) -> impl Fn(std::io::Error) -> PipelineError + 'a {
    move |e| PipelineError::stage(stage, StageError::Io(format!("{}: {e}", path.display())))
}

/// Config for a single stage: the file when given, with dataset paths from
/// the command line; defaults otherwise.
fn stage_config(cli: &Cli, nodes: &Path, edges: &Path) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => validate_config_with(
            path,
            Some(DatasetConfig {
                nodes: nodes.to_path_buf(),
                edges: edges.to_path_buf(),
                name: None,
            }),
        )?,
        None => PipelineConfig::for_dataset(nodes, edges, "out"),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

fn synth(cli: &Cli, args: &SynthArgs) -> anyhow::Result<()> {
    let spec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.clone(),
                source,
            })?;
            toml::from_str::<SyntheticSpec>(&text).map_err(|e| ConfigError::Parse {
                path: p.clone(),
                message: e.to_string(),
            })?
        }
        None => SyntheticSpec::desk_fixture(),
    };
    let graph = generate_synthetic(&spec, cli.seed.unwrap_or(0)).map_err(stage_err("synth"))?;
    save_graph(&graph, &args.out_nodes, &args.out_edges).map_err(stage_err("synth"))?;
    log::info!("wrote {} nodes and {} edges", graph.node_count(), graph.edge_count());
    Ok(())
}

fn augment(cli: &Cli, args: &AugmentArgs) -> anyhow::Result<()> {
    let from_file = match &cli.config {
        Some(p) if args.nodes.is_none() => Some(validate_config(p)?),
        _ => None,
    };
    let (nodes, edges) = match (&from_file, &args.nodes) {
        (Some(cfg), _) => (cfg.dataset.nodes.clone(), Some(cfg.dataset.edges.clone())),
        (None, Some(n)) => (n.clone(), args.edges.clone()),
        (None, None) => bail!(ConfigError::Field {
            field: "--nodes".into(),
            message: "required without a config naming the dataset".into(),
        }),
    };
    let mut cfg = match from_file {
        Some(cfg) => cfg,
        None => stage_config(cli, &nodes, edges.as_deref().unwrap_or(&nodes))?,
    };
    if cli.config.is_none() {
        let dir = args
            .out
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        cfg.augmentation.cache_dir = dir.join("cache");
    }
    let a = &mut cfg.augmentation;
    if let Some(k) = args.kind {
        a.kind = k;
    }
    if let Some(s) = &args.subject {
        a.subject_hint = s.clone();
    }
    if let Some(d) = &args.cache_dir {
        a.cache_dir = d.clone();
    }
    if let Some(m) = &args.model {
        a.model_id = m.clone();
    }
    if let Some(n) = args.max_in_flight {
        a.max_in_flight = n.max(1);
    }
    if let Some(b) = args.backend {
        a.backend = b.into();
    }
    if let Some(u) = &args.base_url {
        a.base_url = Some(u.clone());
    }

    let err = stage_err::<StageError>("augment");
    let graph = match &edges {
        Some(e) => load_graph(&nodes, e),
        None => load_nodes(&nodes),
    }
    .map_err(|e| err(e.into()))?;
    let backend = llm_backend(a);
    let cache = CacheStore::open(&a.cache_dir).map_err(|e| err(textgcl::augment::AugmentError::from(e).into()))?;
    let corpus =
        augment_graph(&backend, a.kind, &a.subject_hint, &graph, &cache, a.max_in_flight).map_err(|e| err(e.into()))?;
    corpus.save_jsonl(&args.out).map_err(io_stage("augment", &args.out))?;
    log::info!(
        "augmented {} nodes with {} ({} requests)",
        corpus.records.len(),
        backend.model_id(),
        backend.request_count()
    );
    Ok(())
}

fn load_corpus(path: &Path, node_count: usize, stage: &'static str) -> Result<AugmentedCorpus, PipelineError> {
    let corpus = AugmentedCorpus::load_jsonl(path).map_err(stage_err(stage))?;
    if corpus.records.len() != node_count {
        return Err(PipelineError::stage(
            stage,
            StageError::Io(format!(
                "{} has {} records for {node_count} nodes",
                path.display(),
                corpus.records.len()
            )),
        ));
    }
    Ok(corpus)
}

fn encode(cli: &Cli, args: &EncodeArgs) -> anyhow::Result<()> {
    let mut cfg = stage_config(cli, &args.nodes, &args.nodes)?;
    if let Some(d) = args.dim {
        match &mut cfg.encoder {
            EncoderBackend::Local(c) => c.dimension = d,
            EncoderBackend::Remote(r) => r.dimension = d,
        }
    }
    let graph = load_nodes(&args.nodes).map_err(stage_err("encode"))?;
    let texts = match &args.corpus {
        Some(p) => load_corpus(p, graph.node_count(), "encode")?.output_texts(),
        None => graph.texts().to_vec(),
    };
    let cache_dir = cfg.augmentation.cache_dir.join("embeddings");
    let (mut views, _) = encode_views(&cfg.encoder, &cache_dir, &[&texts]).map_err(stage_err("encode"))?;
    let h = views.pop().expect("one view");
    save_matrix(&args.out, &h).map_err(io_stage("encode", &args.out))?;
    log::info!("wrote {} x {} features", h.rows(), h.cols());
    Ok(())
}

fn train_cmd(cli: &Cli, args: &TrainArgs) -> anyhow::Result<()> {
    let cfg = stage_config(cli, &args.nodes, &args.edges)?;
    let graph = load_graph(&args.nodes, &args.edges).map_err(stage_err("train"))?;
    let corpus = load_corpus(&args.corpus, graph.node_count(), "train")?;
    let cache_dir = cfg.augmentation.cache_dir.join("embeddings");
    let aug = corpus.output_texts();
    let (mut views, _) = encode_views(&cfg.encoder, &cache_dir, &[graph.texts(), &aug]).map_err(stage_err("encode"))?;
    let hs = views.pop().expect("two views");
    let h = views.pop().expect("two views");
    let result = train(&graph, &h, &hs, &cfg.train).map_err(stage_err("train"))?;
    save_matrix(&args.out_embeddings, &result.h_final).map_err(io_stage("train", &args.out_embeddings))?;
    let meta = serde_json::to_value(&result.metadata)?;
    save_checkpoint(&args.out_checkpoint, &result.stack, meta)
        .map_err(|e| PipelineError::stage("train", textgcl::contrastive::ContrastiveError::from(e).into()))?;
    write_trace_csv(&args.out_trace, &result.loss_trace).map_err(stage_err("train"))?;
    if let (Some(first), Some(last)) = (result.loss_trace.first(), result.loss_trace.last()) {
        log::info!(
            "loss {:.5} -> {:.5} over {} epochs",
            first.mean_loss,
            last.mean_loss,
            result.loss_trace.len()
        );
    }
    Ok(())
}

fn eval(cli: &Cli, args: &EvalArgs) -> anyhow::Result<()> {
    let mut cfg = stage_config(cli, &args.nodes, &args.nodes)?.eval;
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    let graph = load_nodes(&args.nodes).map_err(stage_err("eval"))?;
    let labels = graph
        .labels()
        .ok_or(GraphError::MissingLabels)
        .map_err(stage_err("eval"))?;
    let h = load_matrix(&args.embeddings).map_err(io_stage("eval", &args.embeddings))?;
    let report = run_protocol(&h, labels, &cfg).map_err(stage_err("eval"))?;
    write_report(&report, &args.out, args.format).map_err(stage_err("report"))?;
    if let Some(p) = &args.metrics_out {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n").map_err(io_stage("eval", p))?;
    }
    print!("{}", render_markdown(&report));
    Ok(())
}

fn report(cli: &Cli, args: &ReportArgs) -> anyhow::Result<()> {
    let out_dir = match &cli.config {
        Some(p) => Some(validate_config(p)?.output_dir),
        None => None,
    };
    let metrics = match (&args.metrics, &out_dir) {
        (Some(m), _) => m.clone(),
        (None, Some(d)) => d.join(METRICS_FILE),
        (None, None) => bail!(ConfigError::Field {
            field: "--metrics".into(),
            message: "required without --config".into(),
        }),
    };
    let report = read_metrics(&metrics).map_err(|e| PipelineError::stage("report", e))?;
    match (&args.out, &out_dir) {
        (Some(out), _) => write_report(&report, out, args.format).map_err(stage_err("report"))?,
        (None, Some(d)) if args.metrics.is_none() => {
            write_report(&report, d.join(REPORT_CSV_FILE), ReportFormat::Csv).map_err(stage_err("report"))?;
            write_report(&report, d.join(REPORT_MD_FILE), ReportFormat::Markdown).map_err(stage_err("report"))?;
        }
        _ => {}
    }
    print!("{}", render_markdown(&report));
    Ok(())
}

fn run(cli: &Cli, args: &RunArgs) -> anyhow::Result<()> {
    let Some(path) = &cli.config else {
        bail!(ConfigError::Field {
            field: "--config".into(),
            message: "run needs a pipeline config".into(),
        });
    };
    let mut cfg = validate_config(path)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    let manifest = if args.adaptor_sweep {
        let outcome = run_adaptor_sweep(&cfg, &AdaptorSetting::standard_sweep(), Some(path))?;
        let md = cfg.output_dir.join(SWEEP_MD_FILE);
        print!("{}", fs::read_to_string(&md).with_context(|| md.display().to_string())?);
        outcome.manifest
    } else {
        let manifest = run_pipeline(&cfg, Some(path))?;
        let md = cfg.output_dir.join(REPORT_MD_FILE);
        print!("{}", fs::read_to_string(&md).with_context(|| md.display().to_string())?);
        manifest
    };
    for s in &manifest.stages {
        log::info!("{:<16} {:?} {:.2}s", s.name, s.status, s.seconds);
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(p) = e.downcast_ref::<PipelineError>() {
        return p.exit_code() as u8;
    }
    if e.downcast_ref::<ConfigError>().is_some() {
        return textgcl::pipeline::EXIT_CONFIG as u8;
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => synth(&cli, a),
        Command::Augment(a) => augment(&cli, a),
        Command::Encode(a) => encode(&cli, a),
        Command::Train(a) => train_cmd(&cli, a),
        Command::Eval(a) => eval(&cli, a),
        Command::Report(a) => report(&cli, a),
        Command::Run(a) => run(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
