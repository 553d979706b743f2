//! Language-model backends: prompt assembly, candidate parsing, and the two
//! interchangeable implementations (remote chat-completion and a seeded mock).

mod mock;
mod parse;
mod prompt;
mod remote;
mod template;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use mock::MockBackend;
pub use parse::{parse_candidates, ParseDiagnostic, ParseOutcome};
pub use prompt::{build_prompt, JobKind, ParentBlock, PromptBundle, SYSTEM_PREAMBLE};
pub use remote::{
    ChatTransport, RemoteBackend, RemoteConfig, RetryPolicy, TransportError, UreqTransport,
};
pub use template::{ObjectiveDescription, TaskTemplate, CLOSE_TAG, OPEN_TAG};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited by provider")]
    RateLimited,
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("malformed provider response: {0}")]
    InvalidResponse(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<BackendError>,
    },
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::RateLimited | BackendError::Transient(_))
    }

    /// Errors that should abort the whole run rather than a single job.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::Auth(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallRole {
    Optimizer,
    Summarizer,
}

/// Structured side-channel for backends that do not read the prompt text.
#[derive(Debug, Clone, PartialEq)]
pub enum RequestContext {
    Variation {
        parents: Vec<String>,
        k: usize,
    },
    Summary {
        good: Vec<u64>,
        bad: Vec<u64>,
        prior_version: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendRequest {
    pub role: CallRole,
    pub system: String,
    pub prompt: String,
    pub context: RequestContext,
}

impl BackendRequest {
    pub fn variation(bundle: &PromptBundle) -> Self {
        Self {
            role: CallRole::Optimizer,
            system: bundle.system_preamble.clone(),
            prompt: bundle.body.clone(),
            context: RequestContext::Variation {
                parents: bundle.parents.iter().map(|p| p.text.clone()).collect(),
                k: bundle.k_request,
            },
        }
    }

    /// Hex SHA-256 over system and user text.
    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.system, &self.prompt)
    }
}

pub fn prompt_hash(system: &str, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(system.as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Self) {
        self.input_tokens += rhs.input_tokens;
        self.output_tokens += rhs.output_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendReply {
    pub raw_text: String,
    pub usage: Option<Usage>,
    pub latency_ms: u64,
    pub attempts: u32,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &BackendRequest) -> Result<BackendReply, BackendError>;
}

/// Send one offspring request built from `bundle`.
pub fn request_offspring(
    bundle: &PromptBundle,
    backend: &dyn Backend,
) -> Result<BackendReply, BackendError> {
    backend.complete(&BackendRequest::variation(bundle))
}
