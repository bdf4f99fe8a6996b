use std::collections::BTreeMap;
use std::path::Path;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{
    check_score_inputs, BackendError, GenerationRequest, GenerationResult, LmBackend,
    SequenceScore,
};
use crate::text::collapse_whitespace;

/// One entry of the score fixture list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFixture {
    pub prefix: String,
    pub continuation: String,
    pub total_logprob: f64,
    pub num_tokens: u32,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct FixtureFile {
    #[serde(default)]
    generate: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    score: Vec<ScoreFixture>,
}

/// Canned generations and scores, keyed by whitespace-normalized text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureTable {
    generation: BTreeMap<String, Vec<String>>,
    scores: BTreeMap<(String, String), SequenceScore>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureLoadError {
    #[error("cannot read fixture file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid fixture JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid score fixture for ({prefix:?}, {continuation:?}): {source}")]
    Score {
        prefix: String,
        continuation: String,
        source: BackendError,
    },
}

impl FixtureTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_generation<I, S>(&mut self, prompt: &str, continuations: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.generation.insert(
            collapse_whitespace(prompt),
            continuations.into_iter().map(Into::into).collect(),
        );
    }

    pub fn insert_score(
        &mut self,
        prefix: &str,
        continuation: &str,
        total_logprob: f64,
        num_tokens: u32,
    ) -> Result<(), BackendError> {
        let score = SequenceScore::new(total_logprob, num_tokens)?;
        self.scores.insert(
            (collapse_whitespace(prefix), collapse_whitespace(continuation)),
            score,
        );
        Ok(())
    }

    pub fn generation(&self, prompt: &str) -> Option<&[String]> {
        self.generation
            .get(&collapse_whitespace(prompt))
            .map(Vec::as_slice)
    }

    pub fn score(&self, prefix: &str, continuation: &str) -> Option<SequenceScore> {
        self.scores
            .get(&(collapse_whitespace(prefix), collapse_whitespace(continuation)))
            .copied()
    }

    pub fn is_empty(&self) -> bool {
        self.generation.is_empty() && self.scores.is_empty()
    }

    /// Adds every entry of `other`, overwriting duplicates.
    pub fn merge(&mut self, other: FixtureTable) {
        self.generation.extend(other.generation);
        self.scores.extend(other.scores);
    }

    pub fn from_json_str(json: &str) -> Result<Self, FixtureLoadError> {
        let file: FixtureFile = serde_json::from_str(json)?;
        let mut table = FixtureTable::new();
        for (prompt, texts) in file.generate {
            table.insert_generation(&prompt, texts);
        }
        for s in file.score {
            table
                .insert_score(&s.prefix, &s.continuation, s.total_logprob, s.num_tokens)
                .map_err(|source| FixtureLoadError::Score {
                    prefix: s.prefix.clone(),
                    continuation: s.continuation.clone(),
                    source,
                })?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FixtureLoadError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|source| FixtureLoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&json)
    }

    pub fn to_json_string(&self) -> String {
        let file = FixtureFile {
            generate: self.generation.clone(),
            score: self
                .scores
                .iter()
                .map(|((p, c), s)| ScoreFixture {
                    prefix: p.clone(),
                    continuation: c.clone(),
                    total_logprob: s.total_logprob,
                    num_tokens: s.num_tokens,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("fixture table serializes")
    }
}

/// Deterministic backend answering from a [`FixtureTable`].
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    name: String,
    table: FixtureTable,
}

impl FixtureBackend {
    pub fn new(table: FixtureTable) -> Self {
        Self::named("fixture", table)
    }

    pub fn named(name: impl Into<String>, table: FixtureTable) -> Self {
        Self {
            name: name.into(),
            table,
        }
    }

    pub fn table(&self) -> &FixtureTable {
        &self.table
    }
}

#[async_trait]
impl LmBackend for FixtureBackend {
    fn id(&self) -> String {
        self.name.clone()
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        request.validate()?;
        let texts = self
            .table
            .generation(&request.prompt)
            .ok_or_else(|| BackendError::FixtureMiss(format!("prompt {:?}", request.prompt)))?;
        Ok(GenerationResult {
            texts: texts
                .iter()
                .take(request.num_return as usize)
                .cloned()
                .collect(),
            logprobs: None,
        })
    }

    async fn score(&self, prefix: &str, continuation: &str) -> Result<SequenceScore, BackendError> {
        check_score_inputs(prefix, continuation)?;
        self.table.score(prefix, continuation).ok_or_else(|| {
            BackendError::FixtureMiss(format!("score ({prefix:?}, {continuation:?})"))
        })
    }
}
