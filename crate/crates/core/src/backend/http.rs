//! HTTP backend speaking the chat-completion wire format.
//!
//! Requests go to `{base_url}/chat/completions` and `{base_url}/embeddings`
//! with JSON bodies carrying `model`, `messages`/`input`, and `max_tokens`.
//! The auth token is read from an environment variable named in the config,
//! never from a flag or file.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, GenerationBackend};
use crate::vector::EmbeddingVector;

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// e.g. `http://localhost:11434/v1`
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
    pub timeout_secs: u64,
    pub dimension: usize,
}

pub struct HttpBackend {
    agent: ureq::Agent,
    base_url: String,
    model: String,
    auth_token: Option<String>,
    dimension: usize,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    max_tokens: usize,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl HttpBackend {
    pub fn new(config: &HttpBackendConfig) -> Result<Self, BackendError> {
        if config.base_url.trim().is_empty() {
            return Err(BackendError::Config("backend base_url is empty".into()));
        }
        let auth_token = match &config.auth_env {
            Some(var) => std::env::var(var).ok(),
            None => None,
        };
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            agent: agent_config.new_agent(),
            base_url: config.base_url.trim_end_matches('/').to_string(),
            model: config.model.clone(),
            auth_token,
            dimension: config.dimension,
        })
    }

    fn post_json(&self, path: &str, body: String) -> Result<String, BackendError> {
        let url = format!("{}{}", self.base_url, path);
        let mut request = self
            .agent
            .post(&url)
            .header("content-type", "application/json");
        if let Some(token) = &self.auth_token {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = request
            .send(&body)
            .map_err(|e| BackendError::Transport(format!("POST {url}: {e}")))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(format!("reading body from {url}: {e}")))?;
        match status {
            200..=299 => Ok(text),
            // Server-side and throttling statuses are transient.
            408 | 429 | 500..=599 => Err(BackendError::Transport(format!(
                "{url} returned {status}: {text}"
            ))),
            _ => Err(BackendError::Protocol(format!(
                "{url} returned {status}: {text}"
            ))),
        }
    }
}

impl GenerationBackend for HttpBackend {
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, BackendError> {
        let body = serde_json::to_string(&ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            max_tokens,
        })
        .expect("request serializes");
        let text = self.post_json("/chat/completions", body)?;
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::Protocol(format!("malformed chat response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Protocol("chat response has no choices".into()))
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let body = serde_json::to_string(&EmbeddingRequest {
            model: &self.model,
            input: text,
        })
        .expect("request serializes");
        let raw = self.post_json("/embeddings", body)?;
        let parsed: EmbeddingResponse = serde_json::from_str(&raw)
            .map_err(|e| BackendError::Protocol(format!("malformed embedding response: {e}")))?;
        let values = parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| BackendError::Protocol("embedding response has no data".into()))?;
        if values.len() != self.dimension {
            return Err(BackendError::Dimension {
                expected: self.dimension,
                got: values.len(),
            });
        }
        EmbeddingVector::new(values)
            .map_err(|e| BackendError::Protocol(format!("embedding invalid: {e}")))
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn fingerprint(&self) -> String {
        format!("http:{}:{}", self.base_url, self.model)
    }
}
