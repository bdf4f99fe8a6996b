//! Stage one: commonsense inference of implicit intents.

use std::fmt;

use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, GenerationRequest, LmBackend};
use crate::relation::Relation;
use crate::text::{collapse_whitespace, strip_trailing_periods};

const SCAFFOLDING: [&str; 3] = ["[GEN]", "<s>", "</s>"];

/// A user's high-level intention, trimmed to a single line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "UtteranceRepr")]
pub struct Utterance {
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

#[derive(Deserialize)]
struct UtteranceRepr {
    text: String,
    #[serde(default)]
    id: Option<String>,
}

impl TryFrom<UtteranceRepr> for Utterance {
    type Error = InvalidUtterance;

    fn try_from(r: UtteranceRepr) -> Result<Self, Self::Error> {
        let u = Utterance::new(&r.text)?;
        Ok(match r.id {
            Some(id) => u.with_id(id),
            None => u,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("utterance must contain non-whitespace text")]
pub struct InvalidUtterance;

impl Utterance {
    /// Collapses whitespace (newlines included) and rejects empty text.
    pub fn new(text: &str) -> Result<Self, InvalidUtterance> {
        let text = collapse_whitespace(text);
        if text.is_empty() {
            return Err(InvalidUtterance);
        }
        Ok(Self { text, id: None })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }
}

impl fmt::Display for Utterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Serializes the generator input `<s> {utterance} {relation} [GEN] </s>`.
pub fn build_comet_input(utterance: &Utterance, relation: Relation) -> String {
    format!("<s> {} {} [GEN] </s>", utterance.text(), relation.tag())
}

/// Cleans one raw beam: drops scaffolding tokens, collapses whitespace and
/// strips trailing periods. Returns an empty string when nothing is left.
pub fn normalize_intent(raw: &str) -> String {
    let mut s = raw.to_string();
    // Replacing with a space cannot splice a new token together.
    for tok in SCAFFOLDING {
        s = s.replace(tok, " ");
    }
    let s = collapse_whitespace(&s);
    strip_trailing_periods(&s).to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedIntent {
    pub relation: Relation,
    /// Dense 1-based rank among the kept beams.
    pub rank: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationIntents {
    pub relation: Relation,
    pub intents: Vec<GeneratedIntent>,
}

/// Kept intents per relation, in configured relation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSet {
    pub utterance: Utterance,
    pub intents: Vec<RelationIntents>,
}

impl IntentSet {
    pub fn get(&self, relation: Relation) -> Option<&[GeneratedIntent]> {
        self.intents
            .iter()
            .find(|ri| ri.relation == relation)
            .map(|ri| ri.intents.as_slice())
    }

    pub fn relations(&self) -> impl Iterator<Item = Relation> + '_ {
        self.intents.iter().map(|ri| ri.relation)
    }
}

/// Stage-one decoding settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntentConfig {
    pub num_beams: u32,
    /// How many distinct beams per relation feed stage two.
    pub k_keep: u32,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for IntentConfig {
    fn default() -> Self {
        Self {
            num_beams: 10,
            k_keep: 2,
            max_new_tokens: 24,
            temperature: 1.0,
            top_p: 1.0,
        }
    }
}

impl IntentConfig {
    pub fn validate(&self) -> Result<(), IntentError> {
        if self.k_keep < 1 || self.k_keep > self.num_beams {
            return Err(IntentError::InvalidConfig(format!(
                "k_keep must lie in 1..={} (num_beams), got {}",
                self.num_beams, self.k_keep
            )));
        }
        Ok(())
    }

    pub(crate) fn request(&self, prompt: String) -> GenerationRequest {
        GenerationRequest {
            prompt,
            max_new_tokens: self.max_new_tokens,
            temperature: self.temperature,
            top_p: self.top_p,
            num_beams: self.num_beams,
            num_return: self.num_beams,
            stop_sequences: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntentError {
    #[error("at least one relation is required")]
    NoRelations,
    #[error("invalid intent configuration: {0}")]
    InvalidConfig(String),
    #[error("{relation}: {source}")]
    Backend {
        relation: Relation,
        source: BackendError,
    },
}

/// Keeps the first `k_keep` distinct, non-empty normalized beams in beam order.
pub fn select_intents<S: AsRef<str>>(relation: Relation, beams: &[S], k_keep: u32) -> Vec<GeneratedIntent> {
    let mut kept: Vec<GeneratedIntent> = Vec::new();
    for raw in beams {
        if kept.len() >= k_keep as usize {
            break;
        }
        let text = normalize_intent(raw.as_ref());
        if text.is_empty() || kept.iter().any(|k| k.text == text) {
            continue;
        }
        kept.push(GeneratedIntent {
            relation,
            rank: kept.len() as u32 + 1,
            text,
        });
    }
    kept
}

/// Decodes intents for a single relation.
pub async fn generate_relation_intents(
    utterance: &Utterance,
    relation: Relation,
    backend: &dyn LmBackend,
    config: &IntentConfig,
) -> Result<Vec<GeneratedIntent>, IntentError> {
    let request = config.request(build_comet_input(utterance, relation));
    let result = backend
        .generate(&request)
        .await
        .map_err(|source| IntentError::Backend { relation, source })?;
    Ok(select_intents(relation, &result.texts, config.k_keep))
}

/// Runs stage one for every relation, at most `max_concurrency` calls at a time.
pub async fn generate_intents(
    utterance: &Utterance,
    relations: &[Relation],
    backend: &dyn LmBackend,
    config: &IntentConfig,
    max_concurrency: usize,
) -> Result<IntentSet, IntentError> {
    if relations.is_empty() {
        return Err(IntentError::NoRelations);
    }
    config.validate()?;
    let intents = stream::iter(relations.iter().copied())
        .map(|relation| async move {
            generate_relation_intents(utterance, relation, backend, config)
                .await
                .map(|intents| RelationIntents { relation, intents })
        })
        .buffered(max_concurrency.max(1))
        .try_collect()
        .await?;
    Ok(IntentSet {
        utterance: utterance.clone(),
        intents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FixtureBackend, FixtureTable};
    use proptest::prelude::*;

    fn utt(s: &str) -> Utterance {
        Utterance::new(s).unwrap()
    }

    #[test]
    fn comet_input_format() {
        let u = utt("We want to celebrate a birthday at a restaurant.");
        let s = build_comet_input(&u, Relation::XNeed);
        assert_eq!(
            s,
            "<s> We want to celebrate a birthday at a restaurant. xNeed [GEN] </s>"
        );
        assert_eq!(s, build_comet_input(&u, Relation::XNeed));
        assert_eq!(s.matches("[GEN]").count(), 1);
    }

    #[test]
    fn utterance_validation() {
        assert!(Utterance::new("  \n ").is_err());
        assert_eq!(utt("  two\nlines ").text(), "two lines");
        let json = r#"{"text":"   "}"#;
        assert!(serde_json::from_str::<Utterance>(json).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_intent("  to listen to music. "), "to listen to music");
        assert_eq!(normalize_intent("to be entertained"), "to be entertained");
        assert_eq!(normalize_intent("[GEN]"), "");
        assert_eq!(normalize_intent("<s> to eat </s>"), "to eat");
        assert_eq!(normalize_intent("[GE[GEN]N] x"), "[GE N] x");
    }

    #[test]
    fn select_drops_empty_and_duplicates() {
        let kept = select_intents(Relation::XNeed, &["to eat", "to eat", ""], 3);
        assert_eq!(
            kept,
            vec![GeneratedIntent {
                relation: Relation::XNeed,
                rank: 1,
                text: "to eat".into()
            }]
        );
        let kept = select_intents(Relation::XNeed, &["a", "a.", "b", "c"], 2);
        assert_eq!(kept.iter().map(|k| k.text.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(kept[1].rank, 2);
    }

    fn birthday_backend() -> FixtureBackend {
        let mut t = FixtureTable::new();
        let pop = utt("My best friend likes pop music.");
        t.insert_generation(
            &build_comet_input(&pop, Relation::XWant),
            ["to listen to music", "to go to a concert"],
        );
        t.insert_generation(&build_comet_input(&pop, Relation::XIntent), ["to be entertained"]);
        let job = utt("I am looking for a job.");
        t.insert_generation(&build_comet_input(&job, Relation::XIntent), ["to make money"]);
        FixtureBackend::new(t)
    }

    #[tokio::test]
    async fn generates_birthday_intents() {
        let b = birthday_backend();
        let cfg = IntentConfig::default();
        let set = generate_intents(
            &utt("My best friend likes pop music."),
            &[Relation::XWant, Relation::XIntent],
            &b,
            &cfg,
            2,
        )
        .await
        .unwrap();
        assert_eq!(set.get(Relation::XWant).unwrap()[0].text, "to listen to music");
        assert_eq!(set.get(Relation::XIntent).unwrap()[0].text, "to be entertained");
        assert_eq!(set.relations().collect::<Vec<_>>(), [Relation::XWant, Relation::XIntent]);

        let job = generate_intents(&utt("I am looking for a job."), &[Relation::XIntent], &b, &cfg, 1)
            .await
            .unwrap();
        assert_eq!(job.get(Relation::XIntent).unwrap()[0].text, "to make money");
    }

    #[tokio::test]
    async fn backend_error_is_tagged_with_relation() {
        let b = birthday_backend();
        let err = generate_intents(
            &utt("I am looking for a job."),
            &[Relation::XIntent, Relation::XNeed],
            &b,
            &IntentConfig::default(),
            4,
        )
        .await
        .unwrap_err();
        assert!(matches!(err, IntentError::Backend { relation: Relation::XNeed, .. }));
    }

    #[tokio::test]
    async fn rejects_empty_relations_and_bad_k_keep() {
        let b = birthday_backend();
        let u = utt("x");
        assert_eq!(
            generate_intents(&u, &[], &b, &IntentConfig::default(), 1).await,
            Err(IntentError::NoRelations)
        );
        let cfg = IntentConfig { k_keep: 11, ..Default::default() };
        assert!(matches!(
            generate_intents(&u, &[Relation::XNeed], &b, &cfg, 1).await,
            Err(IntentError::InvalidConfig(_))
        ));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in "[a-z .\\[\\]<>/GENs\\t\\n]{0,40}") {
            let once = normalize_intent(&raw);
            prop_assert_eq!(normalize_intent(&once), once.clone());
            for tok in SCAFFOLDING {
                prop_assert!(!once.contains(tok));
            }
        }

        #[test]
        fn selected_intents_are_bounded_fixed_points(
            beams in proptest::collection::vec("[a-c .]{0,6}", 0..12),
            k_keep in 1u32..5,
        ) {
            let kept = select_intents(Relation::XWant, &beams, k_keep);
            prop_assert!(kept.len() <= k_keep as usize);
            for (i, k) in kept.iter().enumerate() {
                prop_assert_eq!(k.rank as usize, i + 1);
                prop_assert_eq!(normalize_intent(&k.text), k.text.clone());
                prop_assert!(!k.text.is_empty());
            }
        }
    }
}
