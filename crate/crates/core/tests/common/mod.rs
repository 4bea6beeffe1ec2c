//! Local stand-ins for a chat-completions and an embeddings service.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde_json::{json, Value};
use textgcl::text::{encode_text, EmbeddingConfig};

#[derive(Clone)]
pub struct FixtureServer {
    pub base_url: String,
    chat: Arc<AtomicUsize>,
    embeddings: Arc<AtomicUsize>,
}

impl FixtureServer {
    /// Serves `/v1/chat/completions` and `/v1/embeddings` (vectors of
    /// `dimension`) on an ephemeral port until the process exits.
    pub fn start(dimension: usize) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let server = Self {
            base_url,
            chat: Arc::default(),
            embeddings: Arc::default(),
        };
        let s = server.clone();
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let s = s.clone();
                thread::spawn(move || s.serve(stream, dimension));
            }
        });
        server
    }

    pub fn chat_requests(&self) -> usize {
        self.chat.load(Ordering::SeqCst)
    }

    pub fn embedding_requests(&self) -> usize {
        self.embeddings.load(Ordering::SeqCst)
    }

    fn serve(&self, stream: TcpStream, dimension: usize) {
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = stream;
        loop {
            let mut request_line = String::new();
            if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
                return;
            }
            let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    return;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap_or(0);
                    }
                }
            }
            let mut body = vec![0u8; length];
            if reader.read_exact(&mut body).is_err() {
                return;
            }
            let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let (status, reply) = match path.as_str() {
                "/v1/chat/completions" => {
                    self.chat.fetch_add(1, Ordering::SeqCst);
                    (200, chat_reply(&request))
                }
                "/v1/embeddings" => {
                    self.embeddings.fetch_add(1, Ordering::SeqCst);
                    (200, embedding_reply(&request, dimension))
                }
                _ => (404, json!({"error": "not found"})),
            };
            let text = reply.to_string();
            let head = format!(
                "HTTP/1.1 {status} OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
                text.len()
            );
            if writer.write_all(head.as_bytes()).is_err() || writer.write_all(text.as_bytes()).is_err() {
                return;
            }
        }
    }
}

/// First six words of the prompt's content, prefixed.
fn chat_reply(request: &Value) -> Value {
    let prompt = request["messages"][0]["content"].as_str().unwrap_or("");
    let content = prompt.split_once("\nContent: ").map_or(prompt, |(_, c)| c);
    let words: Vec<&str> = content.split_whitespace().take(6).collect();
    json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": format!("brief {}", words.join(" "))}}]})
}

/// Hashed vectors, listed in reverse so clients must honour `index`.
fn embedding_reply(request: &Value, dimension: usize) -> Value {
    let cfg = EmbeddingConfig {
        dimension,
        ..EmbeddingConfig::default()
    };
    let inputs: Vec<&str> = request["input"]
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .rev()
        .map(|(i, t)| json!({"index": i, "embedding": encode_text(t, &cfg)}))
        .collect();
    json!({"data": data})
}
