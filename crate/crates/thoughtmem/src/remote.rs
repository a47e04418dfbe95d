//! OpenAI-compatible HTTP backends: chat completions for the language model
//! and the embeddings endpoint for the encoder. Both share one transport with
//! bounded retries.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;
use thoughtmem_core::embedding::EmbeddingError;
use thoughtmem_core::{Embedder, EmbeddingVector, LanguageModel, LmError};

pub const ENV_LLM_URL: &str = "THOUGHT_LLM_URL";
pub const ENV_LLM_MODEL: &str = "THOUGHT_LLM_MODEL";
pub const ENV_LLM_KEY: &str = "THOUGHT_LLM_KEY";
pub const ENV_LLM_TEMPERATURE: &str = "THOUGHT_LLM_TEMPERATURE";
pub const ENV_EMBED_URL: &str = "THOUGHT_EMBED_URL";
pub const ENV_EMBED_MODEL: &str = "THOUGHT_EMBED_MODEL";
pub const ENV_EMBED_DIM: &str = "THOUGHT_EMBED_DIM";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each further failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RemoteConfigError {
    #[error("environment variable {0} is not set")]
    MissingVar(&'static str),
    #[error("environment variable {name} has an invalid value: {value}")]
    InvalidVar { name: &'static str, value: String },
    #[error("could not build HTTP client: {0}")]
    Client(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteSettings {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl RemoteSettings {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: None,
            temperature: 0.0,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    /// Chat settings from `THOUGHT_LLM_URL`, `THOUGHT_LLM_MODEL`,
    /// `THOUGHT_LLM_KEY`, and `THOUGHT_LLM_TEMPERATURE`.
    pub fn chat_from_env() -> Result<Self, RemoteConfigError> {
        Self::chat_from_lookup(|k| std::env::var(k).ok())
    }

    pub fn chat_from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, RemoteConfigError> {
        let url = get(ENV_LLM_URL).ok_or(RemoteConfigError::MissingVar(ENV_LLM_URL))?;
        let model = get(ENV_LLM_MODEL).ok_or(RemoteConfigError::MissingVar(ENV_LLM_MODEL))?;
        let mut s = Self::new(url, model);
        s.api_key = get(ENV_LLM_KEY).filter(|k| !k.is_empty());
        if let Some(t) = get(ENV_LLM_TEMPERATURE) {
            s.temperature = t.parse().map_err(|_| RemoteConfigError::InvalidVar {
                name: ENV_LLM_TEMPERATURE,
                value: t.clone(),
            })?;
        }
        Ok(s)
    }

    /// Embedding settings from `THOUGHT_EMBED_URL` and `THOUGHT_EMBED_MODEL`,
    /// with the key shared with the chat backend. Returns the dimension from
    /// `THOUGHT_EMBED_DIM`.
    pub fn embeddings_from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<(Self, usize), RemoteConfigError> {
        let url = get(ENV_EMBED_URL).ok_or(RemoteConfigError::MissingVar(ENV_EMBED_URL))?;
        let model = get(ENV_EMBED_MODEL).ok_or(RemoteConfigError::MissingVar(ENV_EMBED_MODEL))?;
        let dim_text = get(ENV_EMBED_DIM).ok_or(RemoteConfigError::MissingVar(ENV_EMBED_DIM))?;
        let dim = dim_text.parse().map_err(|_| RemoteConfigError::InvalidVar {
            name: ENV_EMBED_DIM,
            value: dim_text.clone(),
        })?;
        let mut s = Self::new(url, model);
        s.api_key = get(ENV_LLM_KEY).filter(|k| !k.is_empty());
        Ok((s, dim))
    }
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

struct Transport {
    client: Client,
    settings: RemoteSettings,
}

impl Transport {
    fn new(settings: RemoteSettings) -> Result<Self, RemoteConfigError> {
        let client = Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| RemoteConfigError::Client(e.to_string()))?;
        Ok(Self { client, settings })
    }

    fn once(&self, body: &Value) -> Result<Value, Failure> {
        let mut req = self.client.post(&self.settings.url).json(body);
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(format!("transport: {e}")))?;
        let status = resp.status();
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            return Err(Failure::Retryable(format!("status {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Failure::Fatal(format!("status {status}: {text}")));
        }
        resp.json::<Value>()
            .map_err(|e| Failure::Fatal(format!("unreadable response body: {e}")))
    }

    fn post(&self, body: &Value) -> Result<Value, String> {
        let policy = self.settings.retry;
        let mut last = String::from("no attempts made");
        for attempt in 0..policy.attempts.max(1) {
            if attempt > 0 {
                thread::sleep(policy.delay_before(attempt));
            }
            match self.once(body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(msg)) => return Err(msg),
                Err(Failure::Retryable(msg)) => last = msg,
            }
        }
        Err(format!("{last} (after {} attempts)", policy.attempts.max(1)))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

/// Chat-completion language model. One prompt becomes one user message.
pub struct RemoteModel {
    transport: Transport,
}

impl RemoteModel {
    pub fn new(settings: RemoteSettings) -> Result<Self, RemoteConfigError> {
        Ok(Self {
            transport: Transport::new(settings)?,
        })
    }

    pub fn from_env() -> Result<Self, RemoteConfigError> {
        Self::new(RemoteSettings::chat_from_env()?)
    }

    pub fn settings(&self) -> &RemoteSettings {
        &self.transport.settings
    }
}

impl LanguageModel for RemoteModel {
    fn complete(&self, prompt: &str) -> Result<String, LmError> {
        let s = &self.transport.settings;
        let body = json!({
            "model": s.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": s.temperature,
        });
        let value = self.transport.post(&body).map_err(LmError::BackendUnavailable)?;
        let parsed: ChatResponse = serde_json::from_value(value)
            .map_err(|e| LmError::BackendUnavailable(format!("unexpected response shape: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LmError::BackendUnavailable("response has no choices".into()))
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Embeddings-endpoint encoder. Vectors are normalized on arrival.
pub struct RemoteEmbedder {
    transport: Transport,
    dimension: usize,
}

impl RemoteEmbedder {
    pub fn new(settings: RemoteSettings, dimension: usize) -> Result<Self, RemoteConfigError> {
        Ok(Self {
            transport: Transport::new(settings)?,
            dimension,
        })
    }

    pub fn from_env() -> Result<Self, RemoteConfigError> {
        let (s, dim) = RemoteSettings::embeddings_from_lookup(|k| std::env::var(k).ok())?;
        Self::new(s, dim)
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let body = json!({"model": self.transport.settings.model, "input": text});
        let value = self.transport.post(&body).map_err(EmbeddingError::Backend)?;
        let parsed: EmbeddingResponse = serde_json::from_value(value)
            .map_err(|e| EmbeddingError::Backend(format!("unexpected response shape: {e}")))?;
        let values = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EmbeddingError::Backend("response has no data".into()))?
            .embedding;
        if values.len() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dimension,
                found: values.len(),
            });
        }
        EmbeddingVector::normalize(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.attempts, 3);
        assert_eq!(p.delay_before(1), Duration::from_secs(1));
        assert_eq!(p.delay_before(2), Duration::from_secs(2));
    }

    #[test]
    fn env_lookup() {
        let vars: HashMap<&str, &str> =
            HashMap::from([(ENV_LLM_URL, "http://x/v1/chat/completions"), (ENV_LLM_MODEL, "m")]);
        let s = RemoteSettings::chat_from_lookup(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!((s.temperature, s.api_key.as_deref()), (0.0, None));
        let err = RemoteSettings::chat_from_lookup(|_| None).unwrap_err();
        assert_eq!(err, RemoteConfigError::MissingVar(ENV_LLM_URL));
        let bad: HashMap<&str, &str> =
            HashMap::from([(ENV_LLM_URL, "u"), (ENV_LLM_MODEL, "m"), (ENV_LLM_TEMPERATURE, "hot")]);
        assert!(matches!(
            RemoteSettings::chat_from_lookup(|k| bad.get(k).map(|v| v.to_string())),
            Err(RemoteConfigError::InvalidVar { .. })
        ));
    }
}
