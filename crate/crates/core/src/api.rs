//! JSON bodies of the `/v1` service API, shared by the server and client.

use serde::{Deserialize, Serialize};

use crate::baselines::SystemKind;
use crate::config::PipelineConfig;
use crate::recommender::{Recommendation, RecommendationSet, RelationFailure, Trace};
use crate::relation::Relation;

/// Per-request settings a caller may change.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_keep: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<Vec<Relation>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<Overrides>,
}

/// A recommendation as exposed over the API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendationView {
    pub app: String,
    pub category: String,
    pub relation: Option<Relation>,
    pub supporting_intents: Vec<String>,
    pub rationale: Option<String>,
}

impl From<&Recommendation> for RecommendationView {
    fn from(r: &Recommendation) -> Self {
        Self {
            app: r.app.clone(),
            category: r.category.clone(),
            relation: r.relation,
            supporting_intents: r.supporting_intents.clone(),
            rationale: r.rationale.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendResponse {
    pub session_id: String,
    pub turn: usize,
    pub utterance: String,
    pub system: SystemKind,
    pub recommendations: Vec<RecommendationView>,
    pub failures: Vec<RelationFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
}

impl RecommendResponse {
    pub fn from_set(session_id: String, turn: usize, set: &RecommendationSet, with_trace: bool) -> Self {
        Self {
            session_id,
            turn,
            utterance: set.utterance.text().to_string(),
            system: set.system,
            recommendations: set.recommendations.iter().map(Into::into).collect(),
            failures: set.failures.clone(),
            trace: with_trace.then(|| set.trace.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentsRequest {
    pub utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<Vec<Relation>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_keep: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub intent_backend: String,
    pub app_backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResponse {
    pub config_hash: String,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub turn: usize,
    pub app: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub session_id: String,
    pub turn: usize,
    pub accepted_app: String,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub causes: Vec<RelationFailure>,
}
