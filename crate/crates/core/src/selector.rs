//! Relation trigger selection.
//!
//! A relation's trigger score sums, over every (description, task sentence)
//! pair of a corpus, how likely the generator finds the task sentence as the
//! continuation of `<s> {description} {relation} [GEN] </s>`. The relations
//! with the highest totals are the ones that best bridge high-level and
//! task-specific language.

use std::cmp::Ordering;
use std::io::BufRead;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, LmBackend};
use crate::intents::{build_comet_input, Utterance};
use crate::relation::Relation;

/// One high-level description with the task-specific sentences it expands to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerCorpusEntry {
    pub description: Utterance,
    pub task_sentences: Vec<String>,
    /// 1-based source line, when loaded from a file.
    #[serde(skip)]
    pub line: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Sum of sequence probabilities, `exp(total_logprob)`.
    SumProb,
    /// Sum of per-token mean log-probabilities.
    #[default]
    SumMeanLogprob,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum_prob" => Ok(Aggregation::SumProb),
            "sum_mean_logprob" => Ok(Aggregation::SumMeanLogprob),
            other => Err(format!(
                "unknown aggregation `{other}` (expected sum_prob or sum_mean_logprob)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerScore {
    pub relation: Relation,
    pub value: f64,
    pub aggregation: Aggregation,
    pub pair_count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SelectorError {
    #[error("trigger corpus is empty")]
    EmptyCorpus,
    #[error("scoring {relation} for entry {entry}, sentence {sentence}: {source}")]
    Backend {
        relation: Relation,
        entry: usize,
        sentence: usize,
        source: BackendError,
    },
    #[error("trigger scores mix aggregation modes")]
    MixedAggregation,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: task_sentences must be non-empty")]
    EmptyTaskSentences { line: usize },
    #[error("reading corpus: {0}")]
    Io(#[from] std::io::Error),
}

impl Aggregation {
    fn apply(self, total_logprob: f64, mean_logprob: f64) -> f64 {
        match self {
            Aggregation::SumProb => total_logprob.exp(),
            Aggregation::SumMeanLogprob => mean_logprob,
        }
    }
}

/// Computes the trigger score of `relation` over `corpus`.
///
/// Scoring calls run with at most `max_concurrency` in flight; the sum is
/// always reduced in (entry, sentence) order so the result does not depend on
/// completion order.
pub async fn trigger_score(
    relation: Relation,
    corpus: &[TriggerCorpusEntry],
    backend: &dyn LmBackend,
    aggregation: Aggregation,
    max_concurrency: usize,
) -> Result<TriggerScore, SelectorError> {
    if corpus.is_empty() {
        return Err(SelectorError::EmptyCorpus);
    }
    let pairs: Vec<(usize, usize, String, &str)> = corpus
        .iter()
        .enumerate()
        .flat_map(|(i, entry)| {
            let prefix = build_comet_input(&entry.description, relation);
            entry
                .task_sentences
                .iter()
                .enumerate()
                .map(move |(j, s)| (i, j, prefix.clone(), s.as_str()))
        })
        .collect();

    let terms: Vec<Result<f64, SelectorError>> = stream::iter(pairs)
        .map(|(i, j, prefix, sentence)| async move {
            backend
                .score(&prefix, sentence)
                .await
                .map(|s| aggregation.apply(s.total_logprob, s.mean_logprob))
                .map_err(|source| SelectorError::Backend {
                    relation,
                    entry: i,
                    sentence: j,
                    source,
                })
        })
        .buffered(max_concurrency.max(1))
        .collect()
        .await;

    let mut value = 0.0;
    let mut pair_count = 0;
    for term in terms {
        value += term?;
        pair_count += 1;
    }
    Ok(TriggerScore {
        relation,
        value,
        aggregation,
        pair_count,
    })
}

/// Scores every relation in `relations`, in order.
pub async fn trigger_scores(
    relations: &[Relation],
    corpus: &[TriggerCorpusEntry],
    backend: &dyn LmBackend,
    aggregation: Aggregation,
    max_concurrency: usize,
) -> Result<Vec<TriggerScore>, SelectorError> {
    let mut out = Vec::with_capacity(relations.len());
    for &r in relations {
        out.push(trigger_score(r, corpus, backend, aggregation, max_concurrency).await?);
    }
    Ok(out)
}

/// Sorts scores by value (descending), ties by tag, and keeps the first `n`.
pub fn rank_scores(scores: &[TriggerScore]) -> Result<Vec<TriggerScore>, SelectorError> {
    if let Some(first) = scores.first() {
        if scores.iter().any(|s| s.aggregation != first.aggregation) {
            return Err(SelectorError::MixedAggregation);
        }
    }
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.relation.tag().cmp(b.relation.tag()))
    });
    Ok(ranked)
}

/// The `n` best relations by trigger score.
pub fn select_top_relations(scores: &[TriggerScore], n: usize) -> Result<Vec<Relation>, SelectorError> {
    Ok(rank_scores(scores)?
        .into_iter()
        .take(n)
        .map(|s| s.relation)
        .collect())
}

#[derive(Deserialize)]
struct CorpusLine {
    description: String,
    task_sentences: Vec<String>,
}

/// Reads a JSON Lines trigger corpus. Blank lines are skipped.
pub fn load_trigger_corpus(source: impl BufRead) -> Result<Vec<TriggerCorpusEntry>, SelectorError> {
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine = serde_json::from_str(&line).map_err(|e| SelectorError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let description = Utterance::new(&parsed.description).map_err(|e| SelectorError::Parse {
            line: line_no,
            message: format!("description: {e}"),
        })?;
        let task_sentences: Vec<String> = parsed
            .task_sentences
            .iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if task_sentences.is_empty() {
            return Err(SelectorError::EmptyTaskSentences { line: line_no });
        }
        out.push(TriggerCorpusEntry {
            description,
            task_sentences,
            line: Some(line_no),
        });
    }
    Ok(out)
}
