use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use intentbridge_core::api::ErrorResponse;
use intentbridge_core::intents::IntentError;
use intentbridge_core::recommender::{RecommendError, RelationFailure};

use crate::session::SessionError;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorResponse,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorResponse {
                error: error.to_string(),
                message: message.into(),
                causes: Vec::new(),
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn with_causes(mut self, causes: Vec<RelationFailure>) -> Self {
        self.body.causes = causes;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<RecommendError> for ApiError {
    fn from(e: RecommendError) -> Self {
        let message = e.to_string();
        match e {
            RecommendError::UnsupportedRelation(_) | RecommendError::InvalidInput(_) => {
                Self::bad_request(message)
            }
            RecommendError::AllRelationsFailed(causes) => {
                Self::new(StatusCode::BAD_GATEWAY, "backend_failure", message).with_causes(causes)
            }
            RecommendError::Backend(_) | RecommendError::NoAppFound(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "backend_failure", message)
            }
        }
    }
}

impl From<IntentError> for ApiError {
    fn from(e: IntentError) -> Self {
        let message = e.to_string();
        match e {
            IntentError::NoRelations | IntentError::InvalidConfig(_) => Self::bad_request(message),
            IntentError::Backend { .. } => Self::new(StatusCode::BAD_GATEWAY, "backend_failure", message),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::UnknownSession(_) | SessionError::UnknownTurn(..) => {
                Self::new(StatusCode::NOT_FOUND, "not_found", message)
            }
            SessionError::UnknownApp { .. } => Self::bad_request(message),
            SessionError::Io { .. } | SessionError::Parse { .. } => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}
