use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use super::EncodeError;
use crate::cache::CacheStore;
use crate::digest::sha256_hex_parts;
use crate::http::{JsonClient, RetryPolicy, Transport, UreqTransport};
use crate::numerics::DenseMatrix;

/// Client for an OpenAI-style `/v1/embeddings` service.
#[derive(Debug)]
pub struct EmbeddingClient {
    http: JsonClient,
    base_url: String,
    model_id: String,
    batch_size: usize,
    max_in_flight: usize,
    cache: Option<CacheStore>,
}

impl EmbeddingClient {
    pub fn new(
        transport: Arc<dyn Transport>,
        base_url: impl Into<String>,
        model_id: impl Into<String>,
        api_key: Option<String>,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            http: JsonClient::new(transport, api_key, retry),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model_id: model_id.into(),
            batch_size: 64,
            max_in_flight: 1,
            cache: None,
        }
    }

    /// Live client over HTTP; the key is read from `EMB_API_KEY`, falling back to `LLM_API_KEY`.
    pub fn live(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        let key = std::env::var("EMB_API_KEY")
            .or_else(|_| std::env::var("LLM_API_KEY"))
            .ok();
        Self::new(
            Arc::new(UreqTransport::default()),
            base_url,
            model_id,
            key,
            RetryPolicy::default(),
        )
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_cache(mut self, cache: CacheStore) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn request_count(&self) -> u64 {
        self.http.request_count()
    }

    fn cache_key(&self, text: &str) -> String {
        sha256_hex_parts(&[b"embedding", self.model_id.as_bytes(), text.as_bytes()])
    }

    fn fetch_batch(&self, texts: &[&str], dimension: usize) -> Result<Vec<Vec<f64>>, EncodeError> {
        let url = format!("{}/v1/embeddings", self.base_url);
        let resp = self.http.post(&url, &json!({"model": self.model_id, "input": texts}))?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| EncodeError::MalformedResponse("missing data array".into()))?;
        let mut out: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let vector: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| EncodeError::MalformedResponse(format!("item {pos} has no embedding")))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| EncodeError::MalformedResponse(format!("item {pos} has a non-numeric entry")))
                })
                .collect::<Result<_, _>>()?;
            if vector.len() != dimension {
                return Err(EncodeError::DimensionMismatch {
                    expected: dimension,
                    actual: vector.len(),
                });
            }
            let slot = out
                .get_mut(index)
                .ok_or_else(|| EncodeError::MalformedResponse(format!("index {index} out of range")))?;
            *slot = Some(vector);
        }
        out.into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| EncodeError::MalformedResponse(format!("no embedding for input {i}"))))
            .collect()
    }
}

/// Embeds `texts` remotely, in input order, with unit-norm rows.
///
/// Cached vectors are reused; only the misses are sent, in batches, with at
/// most `max_in_flight` batches outstanding.
pub fn remote_encode<S: AsRef<str>>(
    client: &EmbeddingClient,
    texts: &[S],
    dimension: usize,
) -> Result<DenseMatrix, EncodeError> {
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
    let mut misses: Vec<&str> = Vec::new();
    let mut seen: HashMap<&str, ()> = HashMap::new();
    for (i, t) in texts.iter().enumerate() {
        let t = t.as_ref();
        if let Some(cache) = &client.cache {
            if let Some(v) = cache.get::<Vec<f64>>(&client.cache_key(t))? {
                if v.len() == dimension {
                    rows[i] = Some(v);
                    continue;
                }
            }
        }
        if seen.insert(t, ()).is_none() {
            misses.push(t);
        }
    }

    let batches: Vec<&[&str]> = misses.chunks(client.batch_size).collect();
    let fetched: Mutex<HashMap<String, Vec<f64>>> = Mutex::new(HashMap::new());
    let first_error: Mutex<Option<EncodeError>> = Mutex::new(None);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..client.max_in_flight.min(batches.len()) {
            s.spawn(|| loop {
                let b = next.fetch_add(1, Ordering::Relaxed);
                if b >= batches.len() || first_error.lock().unwrap().is_some() {
                    break;
                }
                let batch = batches[b];
                match client.fetch_batch(batch, dimension) {
                    Ok(vectors) => {
                        let mut map = fetched.lock().unwrap();
                        for (t, v) in batch.iter().zip(vectors) {
                            map.insert(t.to_string(), v);
                        }
                    }
                    Err(e) => {
                        first_error.lock().unwrap().get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let fetched = fetched.into_inner().unwrap();
    if let Some(cache) = &client.cache {
        for (t, v) in &fetched {
            cache.put(&client.cache_key(t), v)?;
        }
    }

    let mut m = DenseMatrix::zeros(texts.len(), dimension);
    for (i, t) in texts.iter().enumerate() {
        let v = match &rows[i] {
            Some(v) => v,
            None => &fetched[t.as_ref()],
        };
        m.row_mut(i).copy_from_slice(v);
        rows[i] = None;
    }
    Ok(m.l2_normalize_rows())
}
