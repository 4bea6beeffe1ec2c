use std::fs;
use std::path::Path;

use textgcl::pipeline::{
    run_adaptor_sweep, run_pipeline, validate_config, AdaptorSetting, PipelineError, StageError, StageStatus,
    MANIFEST_FILE, REPORT_CSV_FILE, REPORT_MD_FILE,
};
use textgcl::tag::{generate_synthetic, save_graph, SyntheticSpec};

fn write_fixture(dir: &Path, extra: &str) -> std::path::PathBuf {
    let g = generate_synthetic(&SyntheticSpec::desk_fixture(), 3).unwrap();
    save_graph(&g, dir.join("nodes.jsonl"), dir.join("edges.jsonl")).unwrap();
    let cfg = format!(
        "seed = 3\n\
         [dataset]\nnodes = \"nodes.jsonl\"\nedges = \"edges.jsonl\"\n\
         [augmentation]\nbackend = \"mock\"\n\
         [encoder.local]\ndimension = 128\n\
         [train]\nbatch_size = 64\nepochs = 2\n\
         [train.encoder]\nhidden_dim = 32\nout_dim = 16\n\
         {extra}"
    );
    let path = dir.join("pipeline.toml");
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn full_run_then_memoized_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_fixture(dir.path(), "");
    let cfg = validate_config(&cfg_path).unwrap();
    let out = cfg.output_dir.clone();

    let first = run_pipeline(&cfg, Some(&cfg_path)).unwrap();
    assert_eq!(first.executed(), vec!["augment", "encode", "train", "eval", "report"]);
    assert_eq!(first.llm_model, "mock");
    assert!(out.join(MANIFEST_FILE).is_file());
    let report = fs::read(out.join(REPORT_CSV_FILE)).unwrap();

    // Every output on disk appears in the manifest with its digest.
    for f in &first.outputs {
        assert_eq!(textgcl::digest::file_sha256(&f.path).unwrap(), f.sha256);
    }
    assert_eq!(first.inputs.len(), 3);
    assert_eq!(first.cache_entries.len(), 200);

    let second = run_pipeline(&cfg, Some(&cfg_path)).unwrap();
    assert!(second.executed().is_empty());
    assert_eq!(second.stage("augment").unwrap().status, StageStatus::Reused);
    assert_eq!(fs::read(out.join(REPORT_CSV_FILE)).unwrap(), report);

    fs::remove_file(out.join(REPORT_CSV_FILE)).unwrap();
    let third = run_pipeline(&cfg, Some(&cfg_path)).unwrap();
    assert_eq!(third.executed(), vec!["report"]);
    assert_eq!(fs::read(out.join(REPORT_CSV_FILE)).unwrap(), report);

    fs::remove_file(out.join("metrics.json")).unwrap();
    let fourth = run_pipeline(&cfg, Some(&cfg_path)).unwrap();
    // Eval reproduces identical metrics, so the report stage stays cached.
    assert_eq!(fourth.executed(), vec!["eval"]);
    assert_eq!(fs::read(out.join(REPORT_CSV_FILE)).unwrap(), report);
}

#[test]
fn tampered_output_is_a_digest_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_fixture(dir.path(), "");
    let cfg = validate_config(&cfg_path).unwrap();
    run_pipeline(&cfg, None).unwrap();
    fs::write(cfg.output_dir.join("features.lgx"), b"LGX1 tampered").unwrap();
    let err = run_pipeline(&cfg, None).unwrap_err();
    assert!(
        matches!(&err, PipelineError::Stage { stage, source: StageError::DigestMismatch(p) }
            if stage == "encode" && p.ends_with("features.lgx")),
        "{err:?}"
    );
    assert!(!cfg.output_dir.join(MANIFEST_FILE).exists());
}

#[test]
fn fresh_output_dirs_give_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_fixture(dir.path(), "");
    let a = validate_config(&cfg_path).unwrap();
    let mut b = a.clone();
    b.output_dir = dir.path().join("other");
    b.augmentation.cache_dir = dir.path().join("other-cache");
    run_pipeline(&a, None).unwrap();
    run_pipeline(&b, None).unwrap();
    for f in ["embeddings.lgx", REPORT_CSV_FILE, REPORT_MD_FILE] {
        assert_eq!(
            fs::read(a.output_dir.join(f)).unwrap(),
            fs::read(b.output_dir.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn missing_labels_fail_in_eval_without_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_fixture(dir.path(), "");
    let text = fs::read_to_string(dir.path().join("nodes.jsonl")).unwrap();
    let unlabelled: String = text
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("label");
            v.to_string() + "\n"
        })
        .collect();
    fs::write(dir.path().join("nodes.jsonl"), unlabelled).unwrap();
    let cfg = validate_config(&cfg_path).unwrap();
    let err = run_pipeline(&cfg, None).unwrap_err();
    assert!(err.to_string().starts_with("stage eval failed"), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(cfg.output_dir.join("embeddings.lgx").is_file());
    assert!(!cfg.output_dir.join(MANIFEST_FILE).exists());
}

#[test]
fn adaptor_sweep_emits_one_row_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_fixture(dir.path(), "");
    let cfg = validate_config(&cfg_path).unwrap();
    let settings = AdaptorSetting::standard_sweep();
    let outcome = run_adaptor_sweep(&cfg, &settings, Some(&cfg_path)).unwrap();
    let labels: Vec<&str> = outcome.rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(labels, vec!["Default", "256", "512", "768"]);
    let md = fs::read_to_string(cfg.output_dir.join("sweep.md")).unwrap();
    assert_eq!(md.lines().count(), 2 + 4);
    assert!(md.lines().nth(3).unwrap().starts_with("| 256 | "));
    assert_eq!(
        outcome
            .manifest
            .executed()
            .iter()
            .filter(|s| s.starts_with("train@"))
            .count(),
        4
    );
}

#[test]
fn readme_config_example_parses_to_defaults() {
    let readme = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let section = readme.split("## Configuration").nth(1).unwrap();
    let block = section.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("nodes.jsonl"), "").unwrap();
    fs::write(dir.path().join("edges.jsonl"), "").unwrap();
    let cfg = textgcl::pipeline::parse_config(block, dir.path()).unwrap();
    let defaults = textgcl::pipeline::PipelineConfig::for_dataset(
        dir.path().join("nodes.jsonl"),
        dir.path().join("edges.jsonl"),
        dir.path().join("out"),
    );
    assert_eq!(cfg, defaults);

    // Swap the local encoder table for the commented-out remote one.
    let mut section = "";
    let mut remote = Vec::new();
    for line in block.lines() {
        if line.starts_with('[') || line.starts_with("# [") {
            section = line.trim_start_matches("# ").split_whitespace().next().unwrap();
        }
        match section {
            "[encoder.local]" => {}
            "[encoder.remote]" => remote.push(line.trim_start_matches("# ")),
            _ => remote.push(line),
        }
    }
    let remote = remote.join("\n");
    let cfg = textgcl::pipeline::parse_config(&remote, dir.path()).unwrap();
    match cfg.encoder {
        textgcl::pipeline::EncoderBackend::Remote(r) => {
            assert_eq!((r.dimension, r.batch_size, r.max_in_flight), (768, 64, 4));
            assert_eq!(r.api_key_env, "EMB_API_KEY");
        }
        other => panic!("unexpected {other:?}"),
    }
}
