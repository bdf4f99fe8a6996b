//! Category-level precision, recall and F1.
//!
//! Apps are compared by store category, so two apps with the same function
//! count as a match. An unmapped app becomes the category `"Unknown"` and
//! counts as a false positive.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::catalog::AppCatalog;
use crate::intents::Utterance;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldApp {
    pub name: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetExample {
    pub id: String,
    pub utterance: Utterance,
    pub gold_apps: Vec<GoldApp>,
}

impl DatasetExample {
    pub fn gold_categories(&self) -> BTreeSet<String> {
        self.gold_apps.iter().map(|a| a.category.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    Micro,
    Macro,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "micro" => Ok(EvalMode::Micro),
            "macro" => Ok(EvalMode::Macro),
            other => Err(format!("unknown evaluation mode `{other}` (expected micro or macro)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: BTreeSet<String>,
    pub gold: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_example: Vec<ExampleScore>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("prediction for unknown utterance id `{0}`")]
    UnknownUtteranceId(String),
    #[error("gold categories for `{0}` are empty")]
    EmptyGold(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: gold_apps must be non-empty")]
    EmptyGoldLine { line: usize },
    #[error("duplicate example id `{0}`")]
    DuplicateId(String),
    #[error("reading dataset: {0}")]
    Io(#[from] std::io::Error),
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Maps each app to its category and returns the distinct categories.
pub fn categorize<S: AsRef<str>>(apps: &[S], catalog: &AppCatalog) -> BTreeSet<String> {
    apps.iter().map(|a| catalog.map_category(a.as_ref())).collect()
}

/// Scores predictions against gold category sets.
///
/// Gold ids without a prediction count as an empty prediction.
pub fn evaluate(
    predictions: &BTreeMap<String, BTreeSet<String>>,
    gold: &BTreeMap<String, BTreeSet<String>>,
    mode: EvalMode,
) -> Result<EvalReport, EvalError> {
    if let Some(id) = predictions.keys().find(|id| !gold.contains_key(*id)) {
        return Err(EvalError::UnknownUtteranceId(id.clone()));
    }
    let empty = BTreeSet::new();
    let mut per_example = Vec::with_capacity(gold.len());
    let (mut hit_total, mut pred_total, mut gold_total) = (0usize, 0usize, 0usize);
    for (id, gold_set) in gold {
        if gold_set.is_empty() {
            return Err(EvalError::EmptyGold(id.clone()));
        }
        let pred_set = predictions.get(id).unwrap_or(&empty);
        let hits = pred_set.intersection(gold_set).count();
        hit_total += hits;
        pred_total += pred_set.len();
        gold_total += gold_set.len();
        let precision = ratio(hits, pred_set.len());
        let recall = ratio(hits, gold_set.len());
        per_example.push(ExampleScore {
            id: id.clone(),
            precision,
            recall,
            f1: f1_score(precision, recall),
            predicted: pred_set.clone(),
            gold: gold_set.clone(),
        });
    }
    let (precision, recall, f1) = match mode {
        EvalMode::Micro => {
            let p = ratio(hit_total, pred_total);
            let r = ratio(hit_total, gold_total);
            (p, r, f1_score(p, r))
        }
        EvalMode::Macro => {
            let n = per_example.len();
            if n == 0 {
                (0.0, 0.0, 0.0)
            } else {
                let mean = |f: fn(&ExampleScore) -> f64| {
                    per_example.iter().map(f).sum::<f64>() / n as f64
                };
                (mean(|e| e.precision), mean(|e| e.recall), mean(|e| e.f1))
            }
        }
    };
    Ok(EvalReport {
        mode,
        precision,
        recall,
        f1,
        per_example,
    })
}

#[derive(Deserialize)]
struct DatasetLine {
    #[serde(default)]
    id: Option<String>,
    utterance: String,
    gold_apps: Vec<GoldApp>,
}

/// Reads a JSON Lines test set. Examples without an `id` field get their
/// 1-based line number as id.
pub fn load_dataset(source: impl BufRead) -> Result<Vec<DatasetExample>, EvalError> {
    let mut out: Vec<DatasetExample> = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| EvalError::Parse {
            line: line_no,
            message,
        };
        let parsed: DatasetLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let utterance = Utterance::new(&parsed.utterance).map_err(|e| parse_err(e.to_string()))?;
        if parsed.gold_apps.is_empty() {
            return Err(EvalError::EmptyGoldLine { line: line_no });
        }
        if parsed.gold_apps.iter().any(|a| a.category.trim().is_empty()) {
            return Err(parse_err("gold app with empty category".into()));
        }
        let id = parsed.id.unwrap_or_else(|| line_no.to_string());
        if out.iter().any(|e| e.id == id) {
            return Err(EvalError::DuplicateId(id));
        }
        out.push(DatasetExample {
            utterance: utterance.with_id(id.clone()),
            id,
            gold_apps: parsed.gold_apps,
        });
    }
    Ok(out)
}

/// Provenance recorded alongside an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub system: crate::baselines::SystemKind,
    pub config_hash: String,
    pub intent_backend: String,
    pub app_backend: String,
    pub dataset: String,
    pub catalog: String,
    pub examples: usize,
    pub failed_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleError {
    pub id: String,
    pub message: String,
}

/// Evaluation output file: both averaging modes plus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metadata: RunMetadata,
    pub primary_mode: EvalMode,
    pub micro: EvalReport,
    #[serde(rename = "macro")]
    pub macro_: EvalReport,
    /// Examples whose system run failed; they count as empty predictions.
    pub errors: Vec<ExampleError>,
}

impl RunReport {
    /// Scores `predictions` (app names per example id) against `dataset`.
    pub fn build(
        metadata: RunMetadata,
        primary_mode: EvalMode,
        dataset: &[DatasetExample],
        predictions: &BTreeMap<String, Vec<String>>,
        catalog: &AppCatalog,
        errors: Vec<ExampleError>,
    ) -> Result<Self, EvalError> {
        let gold: BTreeMap<String, BTreeSet<String>> = dataset
            .iter()
            .map(|e| (e.id.clone(), e.gold_categories()))
            .collect();
        let pred: BTreeMap<String, BTreeSet<String>> = predictions
            .iter()
            .map(|(id, apps)| (id.clone(), categorize(apps, catalog)))
            .collect();
        Ok(Self {
            metadata,
            primary_mode,
            micro: evaluate(&pred, &gold, EvalMode::Micro)?,
            macro_: evaluate(&pred, &gold, EvalMode::Macro)?,
            errors,
        })
    }

    /// Plain-text summary table.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "system: {}  examples: {}  failed: {}  config: {}\n",
            self.metadata.system, self.metadata.examples, self.metadata.failed_examples, self.metadata.config_hash
        );
        out.push_str(&format!("{:<8} {:>9} {:>9} {:>9}\n", "mode", "precision", "recall", "f1"));
        for (name, r) in [("micro", &self.micro), ("macro", &self.macro_)] {
            let mark = if r.mode == self.primary_mode { "*" } else { " " };
            out.push_str(&format!(
                "{:<8} {:>8.1}% {:>8.1}% {:>8.1}%{mark}\n",
                name,
                r.precision * 100.0,
                r.recall * 100.0,
                r.f1 * 100.0
            ));
        }
        out
    }
}
