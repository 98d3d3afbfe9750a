//! Generation backends: the trait the pipeline talks to, a deterministic
//! mock for desk runs and tests, and an HTTP client for chat-completion
//! style inference servers.

mod http;
mod mock;

pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::{FixtureRule, MockBackend};

use std::time::Duration;

use thiserror::Error;

use crate::vector::EmbeddingVector;

#[derive(Debug, Error)]
pub enum BackendError {
    /// Network-level failure; worth retrying.
    #[error("transport: {0}")]
    Transport(String),
    /// The backend answered but the payload is unusable; not retryable.
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

/// A text generation + embedding provider. Implementations must be safe to
/// call from multiple threads; mock implementations must be deterministic
/// for a fixed (seed, input).
pub trait GenerationBackend: Send + Sync {
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, BackendError>;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError>;
    fn dimension(&self) -> usize;
    /// Stable identifier used in embedding-cache keys; changes whenever the
    /// backend would produce different vectors for the same text.
    fn fingerprint(&self) -> String;
}

/// Retry budget for transport errors: `max_retries` extra attempts with
/// exponential backoff starting at `base_delay_ms`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            base_delay_ms: 250,
        }
    }
}

impl RetryPolicy {
    /// No retries, no sleeping. Useful in tests.
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay_ms: 0,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

/// Call `generate`, retrying transport errors per the policy. Protocol and
/// configuration errors surface immediately.
pub fn generate_with_retry(
    backend: &dyn GenerationBackend,
    prompt: &str,
    max_tokens: usize,
    policy: &RetryPolicy,
) -> Result<String, BackendError> {
    let mut attempt = 0;
    loop {
        match backend.generate(prompt, max_tokens) {
            Ok(text) => return Ok(text),
            Err(err) if err.is_retryable() && attempt < policy.max_retries => {
                std::thread::sleep(policy.delay(attempt));
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

/// Embedding counterpart of [`generate_with_retry`].
pub fn embed_with_retry(
    backend: &dyn GenerationBackend,
    text: &str,
    policy: &RetryPolicy,
) -> Result<EmbeddingVector, BackendError> {
    let mut attempt = 0;
    loop {
        match backend.embed(text) {
            Ok(vector) => return Ok(vector),
            Err(err) if err.is_retryable() && attempt < policy.max_retries => {
                std::thread::sleep(policy.delay(attempt));
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}
