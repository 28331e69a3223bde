//! Embedding and answer-generation backends.
//!
//! Offline, deterministic implementations ([`HashingEmbedder`],
//! [`MockProvider`]) back every test; [`RemoteProvider`] talks to an
//! OpenAI-compatible chat-completions endpoint for live runs.

mod embed;
mod mock;
mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use embed::{
    content_words, is_stopword, Embedder, EmbeddingVector, HashingEmbedder, DEFAULT_DIMENSION,
    DEFAULT_SEED,
};
pub use mock::{MockProvider, INSUFFICIENT_CONTEXT, MAX_ANSWER_WORDS};
pub use remote::{RemoteConfig, RemoteProvider, ENV_KEY, ENV_URL};

use crate::corpus::Question;
use crate::retrieval::{ContextPackage, PromptError, PromptTemplates};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub model_id: String,
    pub templates: PromptTemplates,
    pub context: ContextPackage,
    pub question: Question,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub text: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub model_id: String,
    pub latency_ms: u64,
}

impl AnswerResponse {
    pub fn total_tokens(&self) -> usize {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Remote,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::Mock => "mock",
            ProviderKind::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("transport error for model `{model_id}` (request {request_id}): {message}")]
    Transport {
        model_id: String,
        request_id: String,
        message: String,
    },
    #[error("credential rejected for model `{model_id}` (request {request_id}): HTTP {status}")]
    Credential {
        model_id: String,
        request_id: String,
        status: u16,
    },
    #[error("protocol error for model `{model_id}` (request {request_id}): {message}")]
    Protocol {
        model_id: String,
        request_id: String,
        message: String,
    },
    #[error("provider not configured: {0}")]
    NotConfigured(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl ProviderError {
    /// Stable machine-readable class, used as the run status.
    pub fn class(&self) -> &'static str {
        match self {
            ProviderError::Transport { .. } => "transport_error",
            ProviderError::Credential { .. } => "credential_error",
            ProviderError::Protocol { .. } => "protocol_error",
            ProviderError::NotConfigured(_) => "config_error",
            ProviderError::Prompt(_) => "prompt_error",
        }
    }
}

pub trait AnswerProvider: Send + Sync {
    fn generate(&self, req: &AnswerRequest) -> Result<AnswerResponse, ProviderError>;
    fn kind(&self) -> ProviderKind;
}
