//! Blocking JSON-over-HTTP with retry, shared by the chat and embedding clients.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng as _;
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Sends one POST with a JSON body. Implementations must not retry.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(&str, &str)], body: &str) -> Result<HttpResponse, TransportError>;
}

/// Live transport over `ureq`. Non-2xx statuses are returned, not raised.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, headers: &[(&str, &str)], body: &str) -> Result<HttpResponse, TransportError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let mut resp = req.send(body).map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Exponential backoff with jitter on 429, 5xx and transport failures.
#[derive(Clone, Debug, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `retry` (0-based): `base·2^retry`, scaled by a
    /// uniform jitter factor in [0.5, 1.5), capped at `max_delay`.
    pub fn delay(&self, retry: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << retry.min(16));
        let jitter = rand::thread_rng().gen_range(0.5..1.5);
        exp.mul_f64(jitter).min(self.max_delay)
    }

    pub fn is_retryable_status(status: u16) -> bool {
        status == 429 || (500..=599).contains(&status)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Status { status: u16, body: String, attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("response is not valid JSON: {0}")]
    Decode(String),
}

/// Posts JSON with bearer auth and retries; counts every attempt.
pub struct JsonClient {
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    api_key: Option<String>,
    attempts: AtomicU64,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient")
            .field("retry", &self.retry)
            .field("has_api_key", &self.api_key.is_some())
            .field("attempts", &self.request_count())
            .finish()
    }
}

impl JsonClient {
    pub fn new(transport: Arc<dyn Transport>, api_key: Option<String>, retry: RetryPolicy) -> Self {
        Self {
            transport,
            retry,
            api_key,
            attempts: AtomicU64::new(0),
        }
    }

    /// Number of requests sent over the transport, retries included.
    pub fn request_count(&self) -> u64 {
        self.attempts.load(Ordering::Relaxed)
    }

    pub fn post(&self, url: &str, body: &Value) -> Result<Value, HttpError> {
        let body = body.to_string();
        let auth = self.api_key.as_ref().map(|k| format!("Bearer {k}"));
        let headers: Vec<(&str, &str)> = auth.as_deref().map(|a| vec![("Authorization", a)]).unwrap_or_default();

        let mut attempt = 0;
        loop {
            attempt += 1;
            self.attempts.fetch_add(1, Ordering::Relaxed);
            let outcome = self.transport.post_json(url, &headers, &body);
            let err = match outcome {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    return serde_json::from_str(&resp.body).map_err(|e| HttpError::Decode(e.to_string()));
                }
                Ok(resp) => {
                    let retryable = RetryPolicy::is_retryable_status(resp.status);
                    let err = HttpError::Status {
                        status: resp.status,
                        body: resp.body,
                        attempts: attempt,
                    };
                    if !retryable {
                        return Err(err);
                    }
                    err
                }
                Err(e) => HttpError::Transport {
                    message: e.0,
                    attempts: attempt,
                },
            };
            if attempt >= self.retry.max_attempts {
                return Err(err);
            }
            log::warn!("{url}: attempt {attempt} failed ({err}); retrying");
            std::thread::sleep(self.retry.delay(attempt - 1));
        }
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use std::sync::Mutex;

    /// Replays canned responses in order and records every request body.
    #[derive(Default)]
    pub struct ScriptedTransport {
        pub responses: Mutex<Vec<Result<HttpResponse, TransportError>>>,
        pub requests: Mutex<Vec<(String, Vec<(String, String)>, String)>>,
    }

    impl ScriptedTransport {
        pub fn new(responses: Vec<Result<HttpResponse, TransportError>>) -> Self {
            let mut r = responses;
            r.reverse();
            Self {
                responses: Mutex::new(r),
                requests: Mutex::new(Vec::new()),
            }
        }

        pub fn ok(status: u16, body: &str) -> Result<HttpResponse, TransportError> {
            Ok(HttpResponse {
                status,
                body: body.to_string(),
            })
        }
    }

    impl Transport for ScriptedTransport {
        fn post_json(&self, url: &str, headers: &[(&str, &str)], body: &str) -> Result<HttpResponse, TransportError> {
            self.requests.lock().unwrap().push((
                url.to_string(),
                headers.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
                body.to_string(),
            ));
            self.responses
                .lock()
                .unwrap()
                .pop()
                .unwrap_or_else(|| Err(TransportError("script exhausted".into())))
        }
    }
}
