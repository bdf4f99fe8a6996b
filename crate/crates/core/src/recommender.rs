//! Stage two: cloze prompts, app extraction, categorization and rationales.

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, GenerationRequest, LmBackend};
use crate::baselines::{nl_intent_prompt, SystemKind};
use crate::catalog::AppCatalog;
use crate::intents::{
    build_comet_input, select_intents, IntentConfig, IntentSet, RelationIntents, Utterance,
};
use crate::relation::{Relation, RelationKind};
use crate::text::strip_trailing_periods;

pub const APP_CLAUSE_HEAD: &str = "by using a popular app";
pub const ANDROID_HINT: &str = "in Android phone";

/// Where the Android hint goes relative to the final "called".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintPosition {
    /// "...a popular app in Android phone called", keeps the cloze slot last.
    AfterAppWord,
    /// "...a popular app called in Android phone".
    Appended,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    pub android_hint: bool,
    pub hint_position: HintPosition,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            android_hint: true,
            hint_position: HintPosition::AfterAppWord,
        }
    }
}

impl PromptTemplate {
    pub fn plain() -> Self {
        Self {
            android_hint: false,
            ..Self::default()
        }
    }

    /// Completes `head` (e.g. "by using a popular app") into a cloze clause
    /// ending in "called", placing the Android hint if enabled.
    pub fn cloze_clause(&self, head: &str) -> String {
        match (self.android_hint, self.hint_position) {
            (false, _) => format!("{head} called"),
            (true, HintPosition::AfterAppWord) => format!("{head} {ANDROID_HINT} called"),
            (true, HintPosition::Appended) => format!("{head} called {ANDROID_HINT}"),
        }
    }

    pub fn app_clause(&self) -> String {
        self.cloze_clause(APP_CLAUSE_HEAD)
    }
}

/// Verb used for a social relation in the stage-two prompt.
pub fn social_verb(relation: Relation) -> Option<&'static str> {
    match relation {
        Relation::XIntent => Some("intends"),
        Relation::XNeed => Some("needs"),
        Relation::XWant => Some("wants"),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{}{stage}: {cause}", relation.map(|r| format!("{r} ")).unwrap_or_default())]
pub struct RelationFailure {
    pub relation: Option<Relation>,
    pub stage: Stage,
    pub cause: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Intents,
    Apps,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Intents => "intent stage",
            Stage::Apps => "app stage",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecommendError {
    #[error("relation {0} is not one of the supported trigger relations")]
    UnsupportedRelation(Relation),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no app name found in {0:?}")]
    NoAppFound(String),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error("every relation failed: {}", .0.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    AllRelationsFailed(Vec<RelationFailure>),
}

fn join_intents<S: AsRef<str>>(intents: &[S]) -> Result<String, RecommendError> {
    if intents.is_empty() {
        return Err(RecommendError::InvalidInput("intents must be non-empty".into()));
    }
    let parts: Vec<&str> = intents.iter().map(|s| s.as_ref().trim()).collect();
    if parts.iter().any(|s| s.is_empty()) {
        return Err(RecommendError::InvalidInput("intents must be non-empty strings".into()));
    }
    Ok(parts.join(" and "))
}

/// Builds the cloze prompt for one relation's intents.
pub fn build_recommendation_prompt<S: AsRef<str>>(
    relation: Relation,
    intents: &[S],
    template: &PromptTemplate,
) -> Result<String, RecommendError> {
    if !relation.is_trigger() {
        return Err(RecommendError::UnsupportedRelation(relation));
    }
    let joined = join_intents(intents)?;
    let clause = template.app_clause();
    match relation.kind() {
        RelationKind::Social => {
            let verb = social_verb(relation).ok_or(RecommendError::UnsupportedRelation(relation))?;
            Ok(format!("The user {verb} {joined} {clause}"))
        }
        RelationKind::Event => Ok(format!(
            "{}. The user can solve this {clause}",
            strip_trailing_periods(&joined)
        )),
        RelationKind::Physical => Err(RecommendError::UnsupportedRelation(relation)),
    }
}

const QUOTES: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];
const TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?'];

/// Text before the first newline or sentence terminator. A terminator is
/// `.`, `!` or `?` followed by whitespace or the end of the text, so names
/// such as "Booking.com" survive.
pub(crate) fn first_segment(text: &str) -> &str {
    let line = text.split(['\n', '\r']).next().unwrap_or("");
    let mut chars = line.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            match chars.peek() {
                None => return &line[..i],
                Some((_, next)) if next.is_whitespace() => return &line[..i],
                _ => {}
            }
        }
    }
    line
}

fn split_on_and(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut word_start = None;
    for (i, c) in s.char_indices().chain(std::iter::once((s.len(), ' '))) {
        if c.is_whitespace() {
            if let Some(ws) = word_start.take() {
                if s[ws..i].eq_ignore_ascii_case("and") {
                    parts.push(&s[start..ws]);
                    start = i;
                }
            }
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    parts.push(&s[start..]);
    parts
}

fn clean_name(mut s: &str) -> &str {
    loop {
        let t = s
            .trim()
            .trim_matches(QUOTES)
            .trim_end_matches(TRAILING_PUNCT);
        if t.len() == s.len() {
            return t;
        }
        s = t;
    }
}

/// Pulls app names out of an LM continuation.
///
/// With `allow_multiple` the first segment is split on commas and the word
/// "and"; otherwise only the text before the first comma is used.
pub fn extract_app_names(continuation: &str, allow_multiple: bool) -> Result<Vec<String>, RecommendError> {
    let segment = first_segment(continuation);
    let pieces: Vec<&str> = if allow_multiple {
        segment.split([',', ';']).flat_map(split_on_and).collect()
    } else {
        vec![segment.split([',', ';']).next().unwrap_or("")]
    };
    let mut names: Vec<String> = Vec::new();
    for piece in pieces {
        let name = clean_name(piece);
        if name.is_empty() || names.iter().any(|n| n.to_lowercase() == name.to_lowercase()) {
            continue;
        }
        names.push(name.to_string());
    }
    if names.is_empty() {
        return Err(RecommendError::NoAppFound(continuation.to_string()));
    }
    Ok(names)
}

/// Clause form of an intent inside a rationale: a leading "to " is dropped.
pub fn rationale_clause(intent: &str) -> &str {
    let intent = intent.trim();
    intent.strip_prefix("to ").unwrap_or(intent)
}

/// "{app} can help {clause} and {clause}."
pub fn build_rationale<S: AsRef<str>>(app: &str, intents: &[S]) -> Result<String, RecommendError> {
    if app.trim().is_empty() {
        return Err(RecommendError::InvalidInput("app must be non-empty".into()));
    }
    join_intents(intents)?;
    let clauses: Vec<&str> = intents.iter().map(|s| rationale_clause(s.as_ref())).collect();
    Ok(format!(
        "{} can help {}.",
        app.trim(),
        strip_trailing_periods(&clauses.join(" and "))
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub app: String,
    pub category: String,
    /// Relation whose prompt produced the app; absent for the one-stage baseline.
    pub relation: Option<Relation>,
    /// Intents in the exact form they appear in the rationale.
    pub supporting_intents: Vec<String>,
    pub rationale: Option<String>,
    pub source_prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTrace {
    pub stage: Stage,
    pub relation: Option<Relation>,
    pub prompt: String,
    pub generations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub relations: Vec<Relation>,
    pub k_keep: u32,
    pub intents: Option<IntentSet>,
    pub prompts: Vec<PromptTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub utterance: Utterance,
    pub system: SystemKind,
    pub recommendations: Vec<Recommendation>,
    /// Relations that produced nothing, with the reason.
    pub failures: Vec<RelationFailure>,
    pub trace: Trace,
}

/// Stage-two decoding settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppGenerationConfig {
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub num_beams: u32,
    pub num_return: u32,
    pub stop_sequences: Vec<String>,
}

impl Default for AppGenerationConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 50,
            temperature: 0.01,
            top_p: 0.9,
            num_beams: 1,
            num_return: 1,
            stop_sequences: Vec::new(),
        }
    }
}

impl AppGenerationConfig {
    pub fn request(&self, prompt: String) -> GenerationRequest {
        GenerationRequest {
            prompt,
            max_new_tokens: self.max_new_tokens,
            temperature: self.temperature,
            top_p: self.top_p,
            num_beams: self.num_beams,
            num_return: self.num_return,
            stop_sequences: self.stop_sequences.clone(),
        }
    }
}

/// Everything [`recommend`] needs besides the backends and the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendConfig {
    pub relations: Vec<Relation>,
    pub intents: IntentConfig,
    pub generation: AppGenerationConfig,
    pub template: PromptTemplate,
    /// Keep every app named in a continuation instead of the first one.
    pub allow_multiple: bool,
    pub max_concurrency: usize,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        Self {
            relations: Relation::TRIGGERS.to_vec(),
            intents: IntentConfig::default(),
            generation: AppGenerationConfig::default(),
            template: PromptTemplate::default(),
            allow_multiple: false,
            max_concurrency: 4,
        }
    }
}

impl RecommendConfig {
    pub fn validate(&self) -> Result<(), RecommendError> {
        if self.relations.is_empty() {
            return Err(RecommendError::InvalidInput("relation set is empty".into()));
        }
        for (i, r) in self.relations.iter().enumerate() {
            if !r.is_trigger() {
                return Err(RecommendError::UnsupportedRelation(*r));
            }
            if self.relations[..i].contains(r) {
                return Err(RecommendError::InvalidInput(format!("relation {r} listed twice")));
            }
        }
        self.intents
            .validate()
            .map_err(|e| RecommendError::InvalidInput(e.to_string()))?;
        self.generation
            .request("probe".into())
            .validate()
            .map_err(|e| RecommendError::InvalidInput(e.to_string()))?;
        Ok(())
    }
}

/// How stage one obtains intents for a relation.
#[derive(Clone, Copy)]
pub(crate) enum IntentSource<'a> {
    /// Commonsense generator fed `<s> u r [GEN] </s>`.
    Commonsense(&'a dyn LmBackend),
    /// Causal LM continuing a natural-language relation prompt.
    NaturalLanguage(&'a dyn LmBackend),
}

struct RelationOutcome {
    relation: Relation,
    intents: Vec<String>,
    kept: Option<RelationIntents>,
    prompts: Vec<PromptTrace>,
    result: Result<Vec<Recommendation>, RelationFailure>,
}

fn failure(relation: Relation, stage: Stage, cause: impl ToString) -> RelationFailure {
    RelationFailure {
        relation: Some(relation),
        stage,
        cause: cause.to_string(),
    }
}

async fn run_relation(
    utterance: &Utterance,
    relation: Relation,
    source: IntentSource<'_>,
    app_backend: &dyn LmBackend,
    catalog: &AppCatalog,
    config: &RecommendConfig,
) -> RelationOutcome {
    let mut outcome = RelationOutcome {
        relation,
        intents: Vec::new(),
        kept: None,
        prompts: Vec::new(),
        result: Ok(Vec::new()),
    };

    let (backend, request) = match source {
        IntentSource::Commonsense(b) => (b, config.intents.request(build_comet_input(utterance, relation))),
        IntentSource::NaturalLanguage(b) => {
            let prompt = match nl_intent_prompt(utterance, relation) {
                Ok(p) => p,
                Err(e) => {
                    outcome.result = Err(failure(relation, Stage::Intents, e));
                    return outcome;
                }
            };
            let mut req = config.generation.request(prompt);
            req.num_return = config.intents.k_keep;
            (b, req)
        }
    };
    let raw = match backend.generate(&request).await {
        Ok(r) => r.texts,
        Err(e) => {
            outcome.result = Err(failure(relation, Stage::Intents, e));
            return outcome;
        }
    };
    outcome.prompts.push(PromptTrace {
        stage: Stage::Intents,
        relation: Some(relation),
        prompt: request.prompt.clone(),
        generations: raw.clone(),
    });
    let beams: Vec<&str> = match source {
        IntentSource::Commonsense(_) => raw.iter().map(String::as_str).collect(),
        IntentSource::NaturalLanguage(_) => raw.iter().map(|t| first_segment(t)).collect(),
    };
    let kept = select_intents(relation, &beams, config.intents.k_keep);
    outcome.intents = kept.iter().map(|k| k.text.clone()).collect();
    outcome.kept = Some(RelationIntents {
        relation,
        intents: kept,
    });
    if outcome.intents.is_empty() {
        outcome.result = Err(failure(relation, Stage::Intents, "no usable intents generated"));
        return outcome;
    }

    let prompt = match build_recommendation_prompt(relation, &outcome.intents, &config.template) {
        Ok(p) => p,
        Err(e) => {
            outcome.result = Err(failure(relation, Stage::Apps, e));
            return outcome;
        }
    };
    let request = config.generation.request(prompt.clone());
    let generations = match app_backend.generate(&request).await {
        Ok(r) => r.texts,
        Err(e) => {
            outcome.result = Err(failure(relation, Stage::Apps, e));
            return outcome;
        }
    };
    outcome.prompts.push(PromptTrace {
        stage: Stage::Apps,
        relation: Some(relation),
        prompt: prompt.clone(),
        generations: generations.clone(),
    });

    let mut apps: Vec<String> = Vec::new();
    for text in &generations {
        if let Ok(names) = extract_app_names(text, config.allow_multiple) {
            for name in names {
                if !apps.iter().any(|a| a.to_lowercase() == name.to_lowercase()) {
                    apps.push(name);
                }
            }
        }
    }
    if apps.is_empty() {
        outcome.result = Err(failure(
            relation,
            Stage::Apps,
            RecommendError::NoAppFound(generations.join(" | ")),
        ));
        return outcome;
    }

    let supporting: Vec<String> = outcome
        .intents
        .iter()
        .map(|i| rationale_clause(i).to_string())
        .collect();
    let mut recs = Vec::with_capacity(apps.len());
    for app in apps {
        let rationale = match build_rationale(&app, &outcome.intents) {
            Ok(r) => r,
            Err(e) => {
                outcome.result = Err(failure(relation, Stage::Apps, e));
                return outcome;
            }
        };
        recs.push(Recommendation {
            category: catalog.map_category(&app),
            app,
            relation: Some(relation),
            supporting_intents: supporting.clone(),
            rationale: Some(rationale),
            source_prompt: prompt.clone(),
        });
    }
    outcome.result = Ok(recs);
    outcome
}

pub(crate) async fn run_two_stage(
    utterance: &Utterance,
    source: IntentSource<'_>,
    app_backend: &dyn LmBackend,
    catalog: &AppCatalog,
    config: &RecommendConfig,
    system: SystemKind,
) -> Result<RecommendationSet, RecommendError> {
    config.validate()?;
    let outcomes: Vec<RelationOutcome> = stream::iter(config.relations.iter().copied())
        .map(|relation| run_relation(utterance, relation, source, app_backend, catalog, config))
        .buffered(config.max_concurrency.max(1))
        .collect()
        .await;

    let mut recommendations: Vec<Recommendation> = Vec::new();
    let mut failures = Vec::new();
    let mut prompts = Vec::new();
    let mut kept = Vec::new();
    for outcome in outcomes {
        debug_assert!(outcome.kept.as_ref().is_none_or(|k| k.relation == outcome.relation));
        prompts.extend(outcome.prompts);
        if let Some(k) = outcome.kept {
            if !k.intents.is_empty() {
                kept.push(k);
            }
        }
        match outcome.result {
            Ok(recs) => {
                for rec in recs {
                    let dup = recommendations.iter().any(|r| {
                        r.relation == rec.relation && r.app.to_lowercase() == rec.app.to_lowercase()
                    });
                    if !dup {
                        recommendations.push(rec);
                    }
                }
            }
            Err(f) => failures.push(f),
        }
    }
    if failures.len() == config.relations.len() {
        return Err(RecommendError::AllRelationsFailed(failures));
    }
    Ok(RecommendationSet {
        utterance: utterance.clone(),
        system,
        recommendations,
        failures,
        trace: Trace {
            relations: config.relations.clone(),
            k_keep: config.intents.k_keep,
            intents: Some(IntentSet {
                utterance: utterance.clone(),
                intents: kept,
            }),
            prompts,
        },
    })
}

/// Runs the full two-stage pipeline for one utterance.
///
/// Relations that fail are reported in [`RecommendationSet::failures`]; the
/// call fails only when every relation does.
pub async fn recommend(
    utterance: &Utterance,
    intent_backend: &dyn LmBackend,
    app_backend: &dyn LmBackend,
    catalog: &AppCatalog,
    config: &RecommendConfig,
) -> Result<RecommendationSet, RecommendError> {
    run_two_stage(
        utterance,
        IntentSource::Commonsense(intent_backend),
        app_backend,
        catalog,
        config,
        SystemKind::Proposed,
    )
    .await
}
