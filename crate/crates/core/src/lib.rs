//! Zero-shot task-oriented bot recommendation driven by commonsense-inferred
//! implicit intents.
//!
//! The pipeline has two stages. Stage one feeds `<s> {utterance} {relation} [GEN] </s>`
//! to a commonsense generator and keeps the best beams per relation as implicit
//! intents. Stage two turns those intents into cloze prompts ending in
//! "...a popular app called", asks a causal LM to fill in the app name, maps the
//! app to its store category and renders a rationale from the intents.
//!
//! Both language models sit behind [`backend::LmBackend`], so the whole
//! pipeline runs against fixture tables in tests and against remote inference
//! servers in production.

pub mod api;
pub mod backend;
pub mod baselines;
pub mod catalog;
pub mod config;
pub mod evaluator;
pub mod intents;
pub mod pipeline;
pub mod recommender;
pub mod relation;
pub mod selector;
pub mod text;

pub use backend::{
    BackendError, FixtureBackend, FixtureTable, GenerationRequest, GenerationResult, HttpBackend,
    LmBackend, SequenceScore,
};
pub use baselines::SystemKind;
pub use catalog::AppCatalog;
pub use config::PipelineConfig;
pub use evaluator::{EvalMode, EvalReport};
pub use intents::{GeneratedIntent, IntentSet, Utterance};
pub use pipeline::Pipeline;
pub use recommender::{PromptTemplate, Recommendation, RecommendationSet};
pub use relation::{Relation, RelationKind};
