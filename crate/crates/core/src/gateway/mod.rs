//! Provider-agnostic chat completion with a content-addressed transcript
//! cache, bounded concurrency and retries.
//!
//! [`Gateway`] wraps any [`ChatBackend`]: the OpenAI-compatible HTTP client
//! in [`openai`] or the scripted [`mock::MockBackend`].

mod cache;
mod config;
pub mod mock;
pub mod openai;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{TranscriptCache, TranscriptCacheKey};
pub use config::{BackendKind, CacheConfig, EndpointConfig, GatewayConfig, LimitsConfig};
pub use mock::{script_mock, DocumentMock, MockBackend, MockFailure, MockTurn};

pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Document this call belongs to. Used only for routing scripted mocks;
    /// never sent on the wire and not part of the cache key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document_id: Option<String>,
}

impl ChatRequest {
    /// Single user turn at temperature 0.
    pub fn single(model_id: impl Into<String>, prompt: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            model_id: model_id.into(),
            messages: vec![Message::user(prompt)],
            temperature: 0.0,
            max_tokens,
            document_id: None,
        }
    }

    pub fn for_document(mut self, document_id: impl Into<String>) -> Self {
        self.document_id = Some(document_id.into());
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |why: &str| Err(GatewayError::InvalidRequest(why.to_owned()));
        if self.messages.is_empty() {
            return invalid("no messages");
        }
        if self
            .messages
            .windows(2)
            .any(|w| w[0].role == Role::Assistant && w[1].role == Role::Assistant)
        {
            return invalid("two consecutive assistant messages");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return invalid("temperature must be finite and non-negative");
        }
        if self.max_tokens == 0 {
            return invalid("max_tokens must be positive");
        }
        Ok(())
    }

    /// Content of the last user message.
    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Rough token count used by the proactive context guard.
    pub fn estimated_prompt_tokens(&self) -> usize {
        self.messages
            .iter()
            .map(|m| m.content.chars().count().div_ceil(4) + 4)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    #[default]
    Stop,
    Length,
    ContentFilter,
    Error,
}

impl FinishReason {
    pub fn from_wire(reason: Option<&str>) -> Self {
        match reason {
            Some("length") => FinishReason::Length,
            Some("content_filter") => FinishReason::ContentFilter,
            Some("stop") | Some("eos") | None => FinishReason::Stop,
            Some(_) => FinishReason::Error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Live,
    Cache,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub provenance: Provenance,
}

impl ChatResponse {
    /// A response cut off by the token limit must not be parsed as final.
    pub fn is_truncated(&self) -> bool {
        self.finish_reason == FinishReason::Length
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("context length exceeded: {0}")]
    ContextLengthExceeded(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {message}")]
    Provider { status: u16, message: String },
    #[error("mock script exhausted after {calls} calls")]
    MockScriptExhausted { calls: usize },
    #[error("mock turn {turn}: prompt does not contain {expected:?}")]
    MockExpectationFailed { turn: usize, expected: String },
    #[error("invalid mock script: {0}")]
    InvalidScript(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("missing credentials: environment variable {0} is not set")]
    MissingCredentials(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("invalid gateway configuration: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    fn name(&self) -> &str;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (0-based), doubling each time.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(
            self.initial_backoff_ms
                .saturating_mul(factor)
                .min(self.max_backoff_ms),
        )
    }
}

/// Counting semaphore bounding in-flight backend calls.
#[derive(Debug)]
struct Semaphore {
    available: Mutex<usize>,
    released: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.released.wait(n).unwrap();
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.released.notify_one();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub retries: usize,
}

pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    cache: Option<TranscriptCache>,
    retry: RetryPolicy,
    context_window: Option<usize>,
    semaphore: Semaphore,
    backend_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    retries: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: impl ChatBackend + 'static) -> Self {
        Self::from_boxed(Box::new(backend))
    }

    pub fn from_boxed(backend: Box<dyn ChatBackend>) -> Self {
        Self {
            backend,
            cache: None,
            retry: RetryPolicy::default(),
            context_window: None,
            semaphore: Semaphore::new(4),
            backend_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            retries: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: TranscriptCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Rejects requests whose estimated prompt plus completion budget
    /// exceeds `tokens` before they reach the backend.
    pub fn with_context_window(mut self, tokens: Option<usize>) -> Self {
        self.context_window = tokens;
        self
    }

    pub fn with_max_in_flight(mut self, permits: usize) -> Self {
        self.semaphore = Semaphore::new(permits);
        self
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            backend_calls: self.backend_calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
        }
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        if let Some(limit) = self.context_window {
            let needed = req.estimated_prompt_tokens() + req.max_tokens as usize;
            if needed > limit {
                return Err(GatewayError::ContextLengthExceeded(format!(
                    "estimated {needed} tokens exceeds window of {limit}"
                )));
            }
        }

        let key = TranscriptCacheKey::for_request(req);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lookup(&key)? {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
        }

        let response = {
            let _permit = self.semaphore.acquire();
            self.call_with_retry(req)?
        };

        if let Some(cache) = &self.cache {
            if response.finish_reason != FinishReason::Error {
                cache.store(&key, req, &response)?;
            }
        }
        Ok(response)
    }

    fn call_with_retry(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut attempt = 0;
        loop {
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            match self.backend.complete(req) {
                Err(e) if e.is_transient() && attempt < self.retry.max_retries => {
                    log::warn!("{} call failed, retrying: {e}", self.backend.name());
                    thread::sleep(self.retry.backoff(attempt));
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
