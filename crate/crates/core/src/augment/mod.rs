//! LLM-driven text augmentation of graph nodes, with a content-addressed cache
//! so bulk runs can be resumed and replayed without repeating requests.

mod client;
mod prompt;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

pub use client::{LlmBackend, LlmClient, DEFAULT_LLM_BASE_URL, MOCK_MODEL_ID};
pub use prompt::{mock_augment, render_prompt, AugmentationKind, PromptTemplate};

use crate::cache::{CacheError, CacheStore};
use crate::digest::sha256_hex_parts;
use crate::http::{HttpError, RetryPolicy};
use crate::tag::TextAttributedGraph;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("model returned an empty response")]
    EmptyResponse,
    #[error("malformed model response: {0}")]
    MalformedResponse(String),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("max_in_flight must be at least 1")]
    InvalidConcurrency,
    #[error("{} node(s) could not be augmented (first: node {}: {})", failed.len(), failed[0].0, failed[0].1)]
    Partial { failed: Vec<(usize, String)> },
    #[error("corpus file {path}: {message}")]
    CorpusFormat { path: String, message: String },
    #[error("corpus has {actual} records, graph has {expected} nodes")]
    CorpusSize { expected: usize, actual: usize },
}

impl AugmentError {
    pub fn is_transport(&self) -> bool {
        matches!(self, Self::Http(_))
    }

    /// Failures that would repeat for every node: no connection, bad
    /// credentials or endpoint, or an overloaded service after retries.
    pub fn is_systemic(&self) -> bool {
        match self {
            Self::Http(HttpError::Transport { .. }) => true,
            Self::Http(HttpError::Status { status, .. }) => {
                matches!(status, 401 | 403 | 404) || RetryPolicy::is_retryable_status(*status)
            }
            _ => false,
        }
    }
}

/// `sha256(kind ‖ 0x00 ‖ model_id ‖ 0x00 ‖ text)` as lowercase hex.
pub fn cache_key(kind: AugmentationKind, model_id: &str, text: &str) -> String {
    sha256_hex_parts(&[kind.tag().as_bytes(), model_id.as_bytes(), text.as_bytes()])
}

/// One node's augmented text and where it came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub node_id: usize,
    pub kind: AugmentationKind,
    pub model_id: String,
    pub input_text: String,
    pub output_text: String,
    pub cache_key: String,
    #[serde(with = "rfc3339")]
    pub timestamp: DateTime<Utc>,
}

mod rfc3339 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// Augmented texts for every node of a graph, in node order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentedCorpus {
    pub kind: AugmentationKind,
    pub records: Vec<AugmentationRecord>,
}

impl AugmentedCorpus {
    pub fn output_texts(&self) -> Vec<String> {
        self.records.iter().map(|r| r.output_text.clone()).collect()
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self, AugmentError> {
        let path = path.as_ref();
        let fmt_err = |message: String| AugmentError::CorpusFormat {
            path: path.display().to_string(),
            message,
        };
        let file = File::open(path).map_err(|e| fmt_err(e.to_string()))?;
        let mut records: Vec<AugmentationRecord> = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| fmt_err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| fmt_err(format!("line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        let kind = records
            .first()
            .map(|r| r.kind)
            .ok_or_else(|| fmt_err("no records".into()))?;
        for (n, r) in records.iter().enumerate() {
            if r.kind != kind {
                return Err(fmt_err(format!("mixed kinds: {kind} and {}", r.kind)));
            }
            if r.node_id != n {
                return Err(fmt_err(format!("record {n} has node_id {}", r.node_id)));
            }
        }
        Ok(Self { kind, records })
    }
}

/// Augments one node's text, consulting the cache first.
///
/// On a hit no request is made and the stored record is returned with
/// `node_id` set to the caller's node. Empty model output is an error and is
/// never cached.
pub fn augment_node(
    backend: &LlmBackend,
    kind: AugmentationKind,
    subject_hint: &str,
    node_id: usize,
    text: &str,
    cache: &CacheStore,
) -> Result<AugmentationRecord, AugmentError> {
    let key = cache_key(kind, backend.model_id(), text);
    if let Some(mut rec) = cache.get::<AugmentationRecord>(&key)? {
        rec.node_id = node_id;
        return Ok(rec);
    }
    let prompt = render_prompt(kind, subject_hint, text)?;
    let output = match backend {
        LlmBackend::Mock => mock_augment(kind, text).trim().to_string(),
        LlmBackend::Live(client) => client.complete(&prompt)?,
    };
    if output.is_empty() {
        return Err(AugmentError::EmptyResponse);
    }
    let rec = AugmentationRecord {
        node_id,
        kind,
        model_id: backend.model_id().to_string(),
        input_text: text.to_string(),
        output_text: output,
        cache_key: key.clone(),
        // Millisecond precision so records survive a JSON round trip unchanged.
        timestamp: Utc::now().trunc_subsecs(3),
    };
    cache.put(&key, &rec)?;
    Ok(rec)
}

/// Augments every node with at most `max_in_flight` requests outstanding.
///
/// Completed nodes are durable in the cache as soon as they finish, so a
/// failed run can be resumed. A systemic failure stops further dispatch and
/// is returned as is; other per-node failures are collected into
/// [`AugmentError::Partial`].
pub fn augment_graph(
    backend: &LlmBackend,
    kind: AugmentationKind,
    subject_hint: &str,
    graph: &TextAttributedGraph,
    cache: &CacheStore,
    max_in_flight: usize,
) -> Result<AugmentedCorpus, AugmentError> {
    if max_in_flight == 0 {
        return Err(AugmentError::InvalidConcurrency);
    }
    let texts = graph.texts();
    let slots: Mutex<Vec<Option<Result<AugmentationRecord, AugmentError>>>> =
        Mutex::new((0..texts.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = max_in_flight.min(texts.len()).max(1);

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let n = next.fetch_add(1, Ordering::Relaxed);
                if n >= texts.len() {
                    break;
                }
                let result = augment_node(backend, kind, subject_hint, n, &texts[n], cache);
                if matches!(&result, Err(e) if e.is_systemic()) {
                    stop.store(true, Ordering::Relaxed);
                }
                slots.lock().unwrap()[n] = Some(result);
            });
        }
    });

    let slots = slots.into_inner().unwrap();
    let done = slots.iter().filter(|s| matches!(s, Some(Ok(_)))).count();
    let mut records = Vec::with_capacity(texts.len());
    let mut failed = Vec::new();
    let mut systemic = None;
    for (n, slot) in slots.into_iter().enumerate() {
        match slot {
            Some(Ok(r)) => records.push(r),
            Some(Err(e)) if e.is_systemic() => {
                systemic.get_or_insert(e);
            }
            Some(Err(e)) => failed.push((n, e.to_string())),
            None => {}
        }
    }
    if let Some(e) = systemic {
        log::error!(
            "augmentation stopped after a service failure; {done} of {} nodes cached",
            texts.len()
        );
        return Err(e);
    }
    if !failed.is_empty() {
        log::error!(
            "augmentation failed for node ids {:?}",
            failed.iter().map(|f| f.0).collect::<Vec<_>>()
        );
        return Err(AugmentError::Partial { failed });
    }
    Ok(AugmentedCorpus { kind, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testing::ScriptedTransport;
    use crate::http::RetryPolicy;
    use std::sync::Arc;

    fn live(
        responses: Vec<Result<crate::http::HttpResponse, crate::http::TransportError>>,
    ) -> (LlmBackend, Arc<ScriptedTransport>) {
        let t = Arc::new(ScriptedTransport::new(responses));
        let c = LlmClient::new(
            t.clone(),
            "http://llm.test/",
            "gpt-3.5-turbo",
            Some("sk".into()),
            RetryPolicy::no_delay(5),
        );
        (LlmBackend::Live(c), t)
    }

    fn chat(content: &str) -> Result<crate::http::HttpResponse, crate::http::TransportError> {
        ScriptedTransport::ok(
            200,
            &serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string(),
        )
    }

    #[test]
    fn cache_key_is_deterministic_and_domain_separated() {
        let a = cache_key(AugmentationKind::Shorten, "m", "t");
        assert_eq!(a, cache_key(AugmentationKind::Shorten, "m", "t"));
        assert_ne!(a, cache_key(AugmentationKind::Rewriting, "m", "t"));
        assert_eq!(a.len(), 64);
        // Separator keeps (model, text) boundaries unambiguous.
        assert_ne!(
            cache_key(AugmentationKind::Shorten, "ab", "c"),
            cache_key(AugmentationKind::Shorten, "a", "bc")
        );
    }

    #[test]
    fn cache_key_golden() {
        // sha256(b"shorten\x00gpt-3.5-turbo\x00abc") computed with Python's hashlib.
        assert_eq!(
            cache_key(AugmentationKind::Shorten, "gpt-3.5-turbo", "abc"),
            "be5ce71faef1f2b7a3383e62c5b3515eec2250486f7cd8129566bb0ffe6f1041"
        );
    }

    #[test]
    fn mock_node_augmentation() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::open(dir.path()).unwrap();
        let r = augment_node(
            &LlmBackend::Mock,
            AugmentationKind::Shorten,
            "a book",
            0,
            "A cat. A dog.",
            &cache,
        )
        .unwrap();
        assert_eq!(r.output_text, "SUMMARY: A cat.");
        assert_eq!(r.model_id, "mock");
        assert!(cache.contains(&r.cache_key));
    }

    #[test]
    fn live_request_shape_and_trimmed_output() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::open(dir.path()).unwrap();
        let (backend, t) = live(vec![chat("  Concise summary.\n")]);
        let r = augment_node(
            &backend,
            AugmentationKind::Shorten,
            "a book",
            3,
            "Long text. More.",
            &cache,
        )
        .unwrap();
        assert_eq!(r.output_text, "Concise summary.");
        assert_eq!(r.node_id, 3);
        let reqs = t.requests.lock().unwrap();
        assert_eq!(reqs.len(), 1);
        assert_eq!(reqs[0].0, "http://llm.test/v1/chat/completions");
        let body: serde_json::Value = serde_json::from_str(&reqs[0].2).unwrap();
        assert_eq!(body["model"], "gpt-3.5-turbo");
        assert_eq!(body["temperature"], 0);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(
            body["messages"][0]["content"],
            render_prompt(AugmentationKind::Shorten, "a book", "Long text. More.").unwrap()
        );
    }

    #[test]
    fn cache_hit_skips_transport() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::open(dir.path()).unwrap();
        let (backend, _) = live(vec![]);
        let key = cache_key(AugmentationKind::Rewriting, "gpt-3.5-turbo", "hello");
        let stored = AugmentationRecord {
            node_id: 9,
            kind: AugmentationKind::Rewriting,
            model_id: "gpt-3.5-turbo".into(),
            input_text: "hello".into(),
            output_text: "Hello.".into(),
            cache_key: key.clone(),
            timestamp: Utc::now(),
        };
        cache.put(&key, &stored).unwrap();
        let got = augment_node(&backend, AugmentationKind::Rewriting, "x", 9, "hello", &cache).unwrap();
        let mut expected: AugmentationRecord = cache.get(&key).unwrap().unwrap();
        expected.node_id = 9;
        assert_eq!(got, expected);
        assert_eq!(backend.request_count(), 0);
    }

    #[test]
    fn empty_response_is_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::open(dir.path()).unwrap();
        let (backend, _) = live(vec![chat("   ")]);
        let err = augment_node(&backend, AugmentationKind::Shorten, "x", 0, "text", &cache).unwrap_err();
        assert!(matches!(err, AugmentError::EmptyResponse));
        assert!(cache.is_empty());
    }

    #[test]
    fn partial_failure_names_nodes_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::open(dir.path()).unwrap();
        let g = TextAttributedGraph::new(vec!["one".into(), "two".into()], [(0, 1)], None).unwrap();
        // Node 0 succeeds, node 1 gets a non-retryable 400.
        let (backend, _) = live(vec![chat("ONE"), ScriptedTransport::ok(400, "bad")]);
        match augment_graph(&backend, AugmentationKind::Shorten, "x", &g, &cache, 1) {
            Err(AugmentError::Partial { failed }) => assert_eq!(failed[0].0, 1),
            other => panic!("unexpected {other:?}"),
        }
        let (backend, _) = live(vec![chat("TWO")]);
        let corpus = augment_graph(&backend, AugmentationKind::Shorten, "x", &g, &cache, 1).unwrap();
        assert_eq!(corpus.output_texts(), vec!["ONE", "TWO"]);
        assert_eq!(backend.request_count(), 1);
    }

    #[test]
    fn unreachable_service_stops_dispatch() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::open(dir.path()).unwrap();
        let g = TextAttributedGraph::new(vec!["a".into(), "b".into(), "c".into()], [], None).unwrap();
        let refused = || Err(crate::http::TransportError("connection refused".into()));
        let (backend, _) = live((0..5).map(|_| refused()).collect());
        let err = augment_graph(&backend, AugmentationKind::Shorten, "x", &g, &cache, 1).unwrap_err();
        assert!(err.is_transport() && err.is_systemic());
        assert_eq!(backend.request_count(), 5);
        assert!(cache.is_empty());
    }

    #[test]
    fn zero_in_flight_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::open(dir.path()).unwrap();
        let g = TextAttributedGraph::new(vec!["a".into()], [], None).unwrap();
        assert!(matches!(
            augment_graph(&LlmBackend::Mock, AugmentationKind::Shorten, "x", &g, &cache, 0),
            Err(AugmentError::InvalidConcurrency)
        ));
    }

    #[test]
    fn corpus_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheStore::open(dir.path().join("c")).unwrap();
        let g = TextAttributedGraph::new(vec!["a b".into(), "c. d".into(), "e".into()], [], None).unwrap();
        let corpus = augment_graph(&LlmBackend::Mock, AugmentationKind::Expansion, "x", &g, &cache, 2).unwrap();
        assert_eq!(corpus.records.len(), 3);
        assert!(corpus.records.iter().all(|r| r.kind == AugmentationKind::Expansion));
        let path = dir.path().join("corpus.jsonl");
        corpus.save_jsonl(&path).unwrap();
        assert_eq!(AugmentedCorpus::load_jsonl(&path).unwrap(), corpus);
    }
}
