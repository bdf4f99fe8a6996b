//! Thin async client for the intentbridge `/v1` API.

use std::time::Duration;

use intentbridge_core::api::{
    ConfigResponse, ErrorResponse, FeedbackRequest, FeedbackResponse, HealthResponse,
    IntentsRequest, RecommendRequest, RecommendResponse,
};
use intentbridge_core::IntentSet;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot reach service: {0}")]
    Transport(String),
    #[error("service returned {status}: {}", body.message)]
    Api { status: u16, body: ErrorResponse },
    #[error("unexpected response body: {0}")]
    Decode(String),
}

#[derive(Debug, Clone)]
pub struct ServiceClient {
    base_url: String,
    http: reqwest::Client,
}

impl ServiceClient {
    pub fn new(base_url: impl Into<String>) -> Result<Self, ClientError> {
        Self::with_timeout(base_url, Duration::from_secs(300))
    }

    pub fn with_timeout(base_url: impl Into<String>, timeout: Duration) -> Result<Self, ClientError> {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    async fn decode<R: DeserializeOwned>(resp: reqwest::Response) -> Result<R, ClientError> {
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            let body = serde_json::from_str(&text).unwrap_or(ErrorResponse {
                error: "http".into(),
                message: text,
                causes: Vec::new(),
            });
            return Err(ClientError::Api {
                status: status.as_u16(),
                body,
            });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))
    }

    async fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ClientError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base_url))
            .json(body)
            .send()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::decode(resp).await
    }

    async fn get<R: DeserializeOwned>(&self, path: &str) -> Result<R, ClientError> {
        let resp = self
            .http
            .get(format!("{}{path}", self.base_url))
            .send()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::decode(resp).await
    }

    pub async fn recommend(&self, request: &RecommendRequest, trace: bool) -> Result<RecommendResponse, ClientError> {
        let path = if trace { "/v1/recommend?trace=1" } else { "/v1/recommend" };
        self.post(path, request).await
    }

    pub async fn intents(&self, request: &IntentsRequest) -> Result<IntentSet, ClientError> {
        self.post("/v1/intents", request).await
    }

    pub async fn health(&self) -> Result<HealthResponse, ClientError> {
        self.get("/v1/health").await
    }

    pub async fn config(&self) -> Result<ConfigResponse, ClientError> {
        self.get("/v1/config").await
    }

    pub async fn feedback(&self, session_id: &str, turn: usize, app: &str) -> Result<FeedbackResponse, ClientError> {
        let body = FeedbackRequest {
            turn,
            app: app.to_string(),
        };
        self.post(&format!("/v1/sessions/{session_id}/feedback"), &body).await
    }

    /// Raw session record as JSON.
    pub async fn session(&self, session_id: &str) -> Result<serde_json::Value, ClientError> {
        self.get(&format!("/v1/sessions/{session_id}")).await
    }
}
