use std::sync::Arc;

use serde_json::{json, Value};

use super::AugmentError;
use crate::http::{JsonClient, RetryPolicy, Transport, UreqTransport};

pub const DEFAULT_LLM_BASE_URL: &str = "https://api.openai.com";
pub const MOCK_MODEL_ID: &str = "mock";

/// OpenAI-compatible chat-completions client.
#[derive(Debug)]
pub struct LlmClient {
    http: JsonClient,
    base_url: String,
    model_id: String,
    temperature: f64,
}

impl LlmClient {
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
            temperature: 0.0,
        }
    }

    /// Live client configured from `LLM_API_KEY` and `LLM_BASE_URL`.
    pub fn from_env(model_id: impl Into<String>) -> Self {
        let base = std::env::var("LLM_BASE_URL").unwrap_or_else(|_| DEFAULT_LLM_BASE_URL.into());
        let key = std::env::var("LLM_API_KEY").ok();
        Self::new(
            Arc::new(UreqTransport::default()),
            base,
            model_id,
            key,
            RetryPolicy::default(),
        )
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn request_count(&self) -> u64 {
        self.http.request_count()
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let temperature = if self.temperature == 0.0 {
            json!(0)
        } else {
            json!(self.temperature)
        };
        json!({
            "model": self.model_id,
            "temperature": temperature,
            "messages": [{"role": "user", "content": prompt}],
        })
    }

    /// Sends one single-message chat completion and returns the trimmed content.
    pub fn complete(&self, prompt: &str) -> Result<String, AugmentError> {
        let url = format!("{}/v1/chat/completions", self.base_url);
        let resp = self.http.post(&url, &self.request_body(prompt))?;
        let content = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| AugmentError::MalformedResponse("missing choices[0].message.content".into()))?
            .trim();
        if content.is_empty() {
            return Err(AugmentError::EmptyResponse);
        }
        Ok(content.to_string())
    }
}

/// Where augmented text comes from.
#[derive(Debug)]
pub enum LlmBackend {
    Mock,
    Live(LlmClient),
}

impl LlmBackend {
    pub fn model_id(&self) -> &str {
        match self {
            Self::Mock => MOCK_MODEL_ID,
            Self::Live(c) => c.model_id(),
        }
    }

    /// Requests sent over the wire so far; always zero for the mock.
    pub fn request_count(&self) -> u64 {
        match self {
            Self::Mock => 0,
            Self::Live(c) => c.request_count(),
        }
    }
}
