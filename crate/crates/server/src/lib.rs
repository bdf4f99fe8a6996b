//! HTTP/JSON service for the intentbridge pipeline.
//!
//! Routes:
//!
//! | method | path                          | body / reply                              |
//! |--------|-------------------------------|-------------------------------------------|
//! | POST   | `/v1/recommend[?trace=1]`     | `RecommendRequest` → `RecommendResponse`  |
//! | POST   | `/v1/intents`                 | `IntentsRequest` → `IntentSet`            |
//! | GET    | `/v1/health`                  | `HealthResponse`                          |
//! | GET    | `/v1/config`                  | `ConfigResponse`                          |
//! | GET    | `/v1/sessions/:id`            | `SessionRecord`                           |
//! | POST   | `/v1/sessions/:id/feedback`   | `FeedbackRequest` → `FeedbackResponse`    |

mod error;
pub mod session;

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use intentbridge_core::api::{
    ConfigResponse, FeedbackRequest, FeedbackResponse, HealthResponse, IntentsRequest,
    RecommendRequest, RecommendResponse,
};
use intentbridge_core::{IntentSet, Pipeline, Utterance};
use serde::Deserialize;

pub use error::ApiError;
pub use session::{SessionError, SessionEvent, SessionLog, SessionRecord};

#[derive(Clone)]
pub struct AppState {
    pub pipeline: Arc<Pipeline>,
    pub sessions: Arc<SessionLog>,
}

impl AppState {
    pub fn new(pipeline: Pipeline, sessions: SessionLog) -> Self {
        Self {
            pipeline: Arc::new(pipeline),
            sessions: Arc::new(sessions),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/recommend", post(recommend))
        .route("/v1/intents", post(intents))
        .route("/v1/health", get(health))
        .route("/v1/config", get(config))
        .route("/v1/sessions/:id", get(session))
        .route("/v1/sessions/:id/feedback", post(feedback))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: AppState, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "intentbridge service listening");
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Default, Deserialize)]
struct TraceQuery {
    trace: Option<String>,
}

impl TraceQuery {
    fn enabled(&self) -> bool {
        matches!(self.trace.as_deref(), Some("1" | "true" | "yes"))
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(t)| t)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn recommend(
    State(state): State<AppState>,
    Query(query): Query<TraceQuery>,
    payload: Result<Json<RecommendRequest>, JsonRejection>,
) -> Result<Json<RecommendResponse>, ApiError> {
    let req = body(payload)?;
    let utterance = Utterance::new(&req.utterance).map_err(|e| ApiError::bad_request(e.to_string()))?;
    if let Some(id) = &req.session_id {
        if state.sessions.get(id).await.is_none() {
            return Err(SessionError::UnknownSession(id.clone()).into());
        }
    }
    let overrides = req.overrides.unwrap_or_default();
    let set = state.pipeline.run(&utterance, &overrides).await?;
    let (session_id, turn) = state
        .sessions
        .record_turn(req.session_id.as_deref(), utterance.text(), &overrides, &set)
        .await?;
    Ok(Json(RecommendResponse::from_set(session_id, turn, &set, query.enabled())))
}

async fn intents(
    State(state): State<AppState>,
    payload: Result<Json<IntentsRequest>, JsonRejection>,
) -> Result<Json<IntentSet>, ApiError> {
    let req = body(payload)?;
    let utterance = Utterance::new(&req.utterance).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let set = state
        .pipeline
        .intents(&utterance, req.relations.as_deref(), req.k_keep)
        .await?;
    Ok(Json(set))
}

async fn health(State(state): State<AppState>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        intent_backend: state.pipeline.intent_backend().id(),
        app_backend: state.pipeline.app_backend().id(),
    })
}

async fn config(State(state): State<AppState>) -> Json<ConfigResponse> {
    let config = state.pipeline.config().clone();
    Json(ConfigResponse {
        config_hash: config.hash(),
        config,
    })
}

async fn session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionRecord>, ApiError> {
    state
        .sessions
        .get(&id)
        .await
        .map(Json)
        .ok_or_else(|| SessionError::UnknownSession(id).into())
}

async fn feedback(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<FeedbackResponse>, ApiError> {
    let req = body(payload)?;
    let accepted_app = state.sessions.accept(&id, req.turn, &req.app).await?;
    Ok(Json(FeedbackResponse {
        session_id: id,
        turn: req.turn,
        accepted_app,
    }))
}
