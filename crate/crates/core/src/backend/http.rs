use std::time::Duration;

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire;
use super::{
    check_score_inputs, BackendError, GenerationRequest, GenerationResult, LmBackend,
    SequenceScore,
};

#[derive(Debug, Clone)]
pub struct HttpBackendOptions {
    pub timeout: Duration,
    /// Extra attempts after the first one, for transport errors and 5xx replies.
    pub max_retries: u32,
    pub retry_backoff: Duration,
}

impl Default for HttpBackendOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(60),
            max_retries: 2,
            retry_backoff: Duration::from_millis(200),
        }
    }
}

/// Client for an inference server exposing `POST /generate` and `POST /score`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base_url: String,
    client: reqwest::Client,
    options: HttpBackendOptions,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, options: HttpBackendOptions) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(options.timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
            options,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    async fn post<B, R>(&self, path: &str, body: &B) -> Result<R, BackendError>
    where
        B: Serialize + Sync,
        R: DeserializeOwned,
    {
        let url = format!("{}{}", self.base_url, path);
        let mut attempt = 0;
        loop {
            match self.post_once(&url, body).await {
                Ok(r) => return Ok(r),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(e)) => {
                    if attempt >= self.options.max_retries {
                        return Err(e);
                    }
                    attempt += 1;
                    tracing::debug!(%url, attempt, error = %e, "retrying backend call");
                    tokio::time::sleep(self.options.retry_backoff * attempt).await;
                }
            }
        }
    }

    async fn post_once<B, R>(&self, url: &str, body: &B) -> Result<R, Attempt>
    where
        B: Serialize + Sync,
        R: DeserializeOwned,
    {
        let resp = self
            .client
            .post(url)
            .json(body)
            .send()
            .await
            .map_err(|e| Attempt::Retryable(BackendError::Unavailable(format!("{url}: {e}"))))?;
        let status = resp.status();
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            let text = resp.text().await.unwrap_or_default();
            return Err(Attempt::Retryable(BackendError::Unavailable(format!(
                "{url}: {status} {text}"
            ))));
        }
        if !status.is_success() {
            let text = resp.text().await.unwrap_or_default();
            return Err(Attempt::Fatal(BackendError::InvalidRequest(format!(
                "{url}: {status} {text}"
            ))));
        }
        resp.json::<R>()
            .await
            .map_err(|e| Attempt::Fatal(BackendError::BadResponse(format!("{url}: {e}"))))
    }
}

enum Attempt {
    Retryable(BackendError),
    Fatal(BackendError),
}

#[async_trait]
impl LmBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.base_url)
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        request.validate()?;
        let body = wire::GenerateRequest {
            prompt: request.prompt.clone(),
            max_new_tokens: request.max_new_tokens,
            temperature: request.temperature,
            top_p: request.top_p,
            num_beams: request.num_beams,
            num_return: request.num_return,
            stop: request.stop_sequences.clone(),
        };
        let resp: wire::GenerateResponse = self.post("/generate", &body).await?;
        if let Some(lp) = &resp.logprobs {
            if lp.len() != resp.texts.len() {
                return Err(BackendError::BadResponse(format!(
                    "{} texts but {} logprobs",
                    resp.texts.len(),
                    lp.len()
                )));
            }
        }
        // Some servers echo the prompt; continuations never include it.
        let texts = resp
            .texts
            .into_iter()
            .map(|t| match t.strip_prefix(request.prompt.as_str()) {
                Some(rest) => rest.to_string(),
                None => t,
            })
            .collect();
        Ok(GenerationResult {
            texts,
            logprobs: resp.logprobs,
        })
    }

    async fn score(&self, prefix: &str, continuation: &str) -> Result<SequenceScore, BackendError> {
        check_score_inputs(prefix, continuation)?;
        let body = wire::ScoreRequest {
            prefix: prefix.to_string(),
            continuation: continuation.to_string(),
        };
        let resp: wire::ScoreResponse = self.post("/score", &body).await?;
        SequenceScore::new(resp.total_logprob, resp.num_tokens)
    }
}
