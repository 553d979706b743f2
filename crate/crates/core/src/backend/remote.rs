//! OpenAI-style chat-completion client with bounded exponential backoff.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, BackendReply, BackendRequest, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt` counts from 1.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        Duration::from_millis(
            self.base_delay_ms
                .saturating_mul(factor)
                .min(self.max_delay_ms),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-2024-05-13".into(),
            temperature: 1.0,
            max_tokens: 4096,
            api_key_env: "LLMOPT_API_KEY".into(),
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("request timed out")]
    Timeout,
}

/// Minimal HTTP surface the client needs; swapped out in tests.
pub trait ChatTransport: Send + Sync {
    /// POST a JSON body, returning the status code and response text.
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
    ) -> Result<(u16, String), TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl ChatTransport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
    ) -> Result<(u16, String), TransportError> {
        let result = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {bearer}"))
            .header("Content-Type", "application/json")
            .send(body.to_string());
        match result {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| TransportError::Connect(e.to_string()))?;
                Ok((status, text))
            }
            Err(ureq::Error::Timeout(_)) => Err(TransportError::Timeout),
            Err(e) => Err(TransportError::Connect(e.to_string())),
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: String,
    transport: Box<dyn ChatTransport>,
    sleep: fn(Duration),
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    /// Build a client reading the key from `config.api_key_env`.
    pub fn from_env(config: RemoteConfig) -> Result<Self, BackendError> {
        let key = std::env::var(&config.api_key_env).map_err(|_| {
            BackendError::Auth(format!(
                "environment variable {} is not set; export your provider API key there",
                config.api_key_env
            ))
        })?;
        let transport = UreqTransport::new(Duration::from_secs(config.timeout_secs));
        Ok(Self::with_transport(config, key, Box::new(transport)))
    }

    pub fn with_transport(
        config: RemoteConfig,
        api_key: String,
        transport: Box<dyn ChatTransport>,
    ) -> Self {
        Self {
            config,
            api_key,
            transport,
            sleep: std::thread::sleep,
        }
    }

    /// Replace the sleep function used between retries.
    pub fn with_sleep(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn payload(&self, request: &BackendRequest) -> Value {
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.prompt},
            ],
        })
    }

    fn attempt(&self, body: &Value) -> Result<(String, Option<Usage>), BackendError> {
        let (status, text) = self
            .transport
            .post_json(&self.endpoint(), &self.api_key, body)
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        match status {
            200..=299 => parse_completion(&text),
            401 | 403 => Err(BackendError::Auth(format!(
                "provider returned {status}; check the key in {}",
                self.config.api_key_env
            ))),
            429 => Err(BackendError::RateLimited),
            408 | 500..=599 => Err(BackendError::Transient(format!("HTTP {status}"))),
            _ => Err(BackendError::Rejected(format!(
                "HTTP {status}: {}",
                snippet(&text)
            ))),
        }
    }
}

impl Backend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendReply, BackendError> {
        let body = self.payload(request);
        let started = Instant::now();
        let max_attempts = self.config.retry.attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(&body) {
                Ok((raw_text, usage)) => {
                    return Ok(BackendReply {
                        raw_text,
                        usage,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts: attempt,
                    })
                }
                Err(e) if e.is_retryable() && attempt < max_attempts => {
                    log::warn!("backend attempt {attempt} failed: {e}; retrying");
                    (self.sleep)(self.config.retry.delay(attempt));
                }
                Err(e) if e.is_retryable() => {
                    return Err(BackendError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn parse_completion(text: &str) -> Result<(String, Option<Usage>), BackendError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| BackendError::InvalidResponse(format!("not JSON: {e}")))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::InvalidResponse("missing choices[0].message.content".into()))?
        .to_string();
    let usage = v.get("usage").and_then(|u| {
        Some(Usage {
            input_tokens: u.get("prompt_tokens")?.as_u64()?,
            output_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok((content, usage))
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}
