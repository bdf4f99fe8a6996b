//! Language-model backends: a uniform generate/score contract, a fixture-driven
//! mock, and an HTTP client for remote inference servers.

mod fixture;
mod http;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

pub use fixture::{FixtureBackend, FixtureTable, ScoreFixture};
pub use http::{HttpBackend, HttpBackendOptions};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("no fixture for {0}")]
    FixtureMiss(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed backend response: {0}")]
    BadResponse(String),
}

/// Decoding parameters for one generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub num_beams: u32,
    pub num_return: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        let invalid = |msg: &str| Err(BackendError::InvalidRequest(msg.to_string()));
        if self.prompt.trim().is_empty() {
            return invalid("prompt must be non-empty");
        }
        if self.max_new_tokens < 1 {
            return invalid("max_new_tokens must be at least 1");
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return invalid("temperature must be a non-negative number");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return invalid("top_p must lie in (0, 1]");
        }
        if self.num_beams < 1 || self.num_return < 1 {
            return invalid("num_beams and num_return must be at least 1");
        }
        if self.num_beams > 1 && self.num_return > self.num_beams {
            return invalid("num_return cannot exceed num_beams under beam search");
        }
        Ok(())
    }
}

/// Continuations returned by a generate call, prompt excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<f64>>,
}

/// Natural-log score of a continuation given a prefix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub total_logprob: f64,
    pub num_tokens: u32,
    pub mean_logprob: f64,
}

impl SequenceScore {
    pub fn new(total_logprob: f64, num_tokens: u32) -> Result<Self, BackendError> {
        if !total_logprob.is_finite() || total_logprob > 0.0 {
            return Err(BackendError::BadResponse(format!(
                "total_logprob must be finite and <= 0, got {total_logprob}"
            )));
        }
        if num_tokens < 1 {
            return Err(BackendError::BadResponse("num_tokens must be at least 1".into()));
        }
        Ok(Self {
            total_logprob,
            num_tokens,
            mean_logprob: total_logprob / num_tokens as f64,
        })
    }
}

/// Generation and scoring contract shared by every backend.
///
/// Implementations must be safe to call concurrently; no call may depend on
/// state left behind by a previous one.
#[async_trait]
pub trait LmBackend: Send + Sync {
    /// Short identifier recorded in run metadata.
    fn id(&self) -> String;

    async fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError>;

    /// Total log-probability of `continuation` conditioned on `prefix`.
    async fn score(&self, prefix: &str, continuation: &str) -> Result<SequenceScore, BackendError>;
}

pub(crate) fn check_score_inputs(prefix: &str, continuation: &str) -> Result<(), BackendError> {
    if prefix.trim().is_empty() || continuation.trim().is_empty() {
        return Err(BackendError::InvalidRequest(
            "prefix and continuation must be non-empty".into(),
        ));
    }
    Ok(())
}

/// JSON bodies exchanged with a remote inference server.
pub mod wire {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct GenerateRequest {
        pub prompt: String,
        pub max_new_tokens: u32,
        pub temperature: f64,
        pub top_p: f64,
        pub num_beams: u32,
        pub num_return: u32,
        pub stop: Vec<String>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct GenerateResponse {
        pub texts: Vec<String>,
        #[serde(default)]
        pub logprobs: Option<Vec<f64>>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ScoreRequest {
        pub prefix: String,
        pub continuation: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ScoreResponse {
        pub total_logprob: f64,
        pub num_tokens: u32,
    }
}
