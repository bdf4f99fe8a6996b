//! Comparison systems: direct one-stage prompting, and a two-stage variant
//! whose intents come from natural-language relation prompts instead of the
//! commonsense generator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::LmBackend;
use crate::catalog::AppCatalog;
use crate::intents::Utterance;
use crate::recommender::{
    extract_app_names, run_two_stage, IntentSource, PromptTrace, Recommendation, RecommendConfig,
    RecommendError, RecommendationSet, Stage, Trace,
};
use crate::relation::Relation;
use crate::text::strip_trailing_periods;

pub const ONE_STAGE_HEAD: &str = "so I can use some popular apps";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// Commonsense intents, then per-relation app prompts.
    #[default]
    Proposed,
    /// Utterance straight to app names.
    OneStage,
    /// Natural-language relation prompts for intents, then app prompts.
    TwoStageNl,
}

impl SystemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SystemKind::Proposed => "proposed",
            SystemKind::OneStage => "one-stage",
            SystemKind::TwoStageNl => "two-stage-nl",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(SystemKind::Proposed),
            "one-stage" => Ok(SystemKind::OneStage),
            "two-stage-nl" => Ok(SystemKind::TwoStageNl),
            other => Err(format!(
                "unknown system `{other}` (expected proposed, one-stage or two-stage-nl)"
            )),
        }
    }
}

/// "{utterance}, so I can use some popular apps called".
pub fn one_stage_prompt(utterance: &Utterance, template: &crate::recommender::PromptTemplate) -> String {
    format!(
        "{}, {}",
        strip_trailing_periods(utterance.text()),
        template.cloze_clause(ONE_STAGE_HEAD)
    )
}

/// Relation-specific continuation prompt used by the natural-language
/// two-stage baseline.
pub fn nl_intent_prompt(utterance: &Utterance, relation: Relation) -> Result<String, RecommendError> {
    let text = strip_trailing_periods(utterance.text());
    let prompt = match relation {
        Relation::XIntent => format!("{text}, so I intend"),
        Relation::XNeed => format!("{text}, so I need"),
        Relation::XWant => format!("{text}, so I want"),
        Relation::IsAfter => format!("{text}. Before, the user needs to"),
        Relation::IsBefore => format!("{text}. After, the user needs to"),
        other => return Err(RecommendError::UnsupportedRelation(other)),
    };
    Ok(prompt)
}

/// One-stage baseline: every app named in the continuation, no relation or
/// rationale.
pub async fn one_stage(
    utterance: &Utterance,
    app_backend: &dyn LmBackend,
    catalog: &AppCatalog,
    config: &RecommendConfig,
) -> Result<RecommendationSet, RecommendError> {
    let prompt = one_stage_prompt(utterance, &config.template);
    let generations = app_backend
        .generate(&config.generation.request(prompt.clone()))
        .await?
        .texts;
    let mut apps: Vec<String> = Vec::new();
    for text in &generations {
        if let Ok(names) = extract_app_names(text, true) {
            for name in names {
                if !apps.iter().any(|a| a.to_lowercase() == name.to_lowercase()) {
                    apps.push(name);
                }
            }
        }
    }
    if apps.is_empty() {
        return Err(RecommendError::NoAppFound(generations.join(" | ")));
    }
    let recommendations = apps
        .into_iter()
        .map(|app| Recommendation {
            category: catalog.map_category(&app),
            app,
            relation: None,
            supporting_intents: Vec::new(),
            rationale: None,
            source_prompt: prompt.clone(),
        })
        .collect();
    Ok(RecommendationSet {
        utterance: utterance.clone(),
        system: SystemKind::OneStage,
        recommendations,
        failures: Vec::new(),
        trace: Trace {
            relations: Vec::new(),
            k_keep: config.intents.k_keep,
            intents: None,
            prompts: vec![PromptTrace {
                stage: Stage::Apps,
                relation: None,
                prompt,
                generations,
            }],
        },
    })
}

/// Two-stage baseline: intents come from `intent_lm` continuing
/// [`nl_intent_prompt`], then flow through the regular stage-two prompts.
pub async fn two_stage_nl(
    utterance: &Utterance,
    intent_lm: &dyn LmBackend,
    app_backend: &dyn LmBackend,
    catalog: &AppCatalog,
    config: &RecommendConfig,
) -> Result<RecommendationSet, RecommendError> {
    run_two_stage(
        utterance,
        IntentSource::NaturalLanguage(intent_lm),
        app_backend,
        catalog,
        config,
        SystemKind::TwoStageNl,
    )
    .await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FixtureBackend, FixtureTable};
    use crate::recommender::{HintPosition, PromptTemplate};

    fn utt(s: &str) -> Utterance {
        Utterance::new(s).unwrap()
    }

    #[test]
    fn one_stage_prompt_text() {
        assert_eq!(
            one_stage_prompt(&utt("I want to relax"), &PromptTemplate::plain()),
            "I want to relax, so I can use some popular apps called"
        );
        assert_eq!(
            one_stage_prompt(&utt("I want to relax."), &PromptTemplate::default()),
            "I want to relax, so I can use some popular apps in Android phone called"
        );
        let appended = PromptTemplate {
            android_hint: true,
            hint_position: HintPosition::Appended,
        };
        assert_eq!(
            one_stage_prompt(&utt("I want to relax"), &appended),
            "I want to relax, so I can use some popular apps called in Android phone"
        );
    }

    #[test]
    fn nl_prompts() {
        assert_eq!(
            nl_intent_prompt(&utt("I am looking for a job."), Relation::XNeed).unwrap(),
            "I am looking for a job, so I need"
        );
        assert_eq!(
            nl_intent_prompt(&utt("I am looking for a job."), Relation::XIntent).unwrap(),
            "I am looking for a job, so I intend"
        );
        assert_eq!(
            nl_intent_prompt(&utt("I am late."), Relation::IsAfter).unwrap(),
            "I am late. Before, the user needs to"
        );
        assert_eq!(
            nl_intent_prompt(&utt("I am late"), Relation::IsBefore).unwrap(),
            "I am late. After, the user needs to"
        );
        assert_eq!(
            nl_intent_prompt(&utt("I am late."), Relation::OEffect),
            Err(RecommendError::UnsupportedRelation(Relation::OEffect))
        );
    }

    #[test]
    fn system_kind_parsing() {
        for k in [SystemKind::Proposed, SystemKind::OneStage, SystemKind::TwoStageNl] {
            assert_eq!(k.as_str().parse::<SystemKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert!("gpt3".parse::<SystemKind>().is_err());
    }

    #[tokio::test]
    async fn one_stage_keeps_every_app() {
        let u = utt("Check if my friend sent the money to me.");
        let mut t = FixtureTable::new();
        t.insert_generation(
            &one_stage_prompt(&u, &PromptTemplate::plain()),
            [" WhatsApp, WeChat and whatsapp."],
        );
        let mut catalog = AppCatalog::new();
        catalog.insert("WhatsApp", "Communication").unwrap();
        catalog.insert("WeChat", "Communication").unwrap();
        let cfg = RecommendConfig {
            template: PromptTemplate::plain(),
            ..Default::default()
        };
        let set = one_stage(&u, &FixtureBackend::new(t), &catalog, &cfg).await.unwrap();
        let apps: Vec<_> = set.recommendations.iter().map(|r| r.app.as_str()).collect();
        assert_eq!(apps, ["WhatsApp", "WeChat"]);
        assert!(set.recommendations.iter().all(|r| r.relation.is_none() && r.rationale.is_none()));
        assert_eq!(set.system, SystemKind::OneStage);
    }

    #[tokio::test]
    async fn two_stage_nl_feeds_stage_two() {
        let u = utt("I am looking for a job.");
        let mut t = FixtureTable::new();
        t.insert_generation("I am looking for a job, so I need", [" to update my resume. Then more text"]);
        t.insert_generation(
            "The user needs to update my resume by using a popular app called",
            [" LinkedIn"],
        );
        let cfg = RecommendConfig {
            relations: vec![Relation::XNeed],
            template: PromptTemplate::plain(),
            ..Default::default()
        };
        let b = FixtureBackend::new(t);
        let set = two_stage_nl(&u, &b, &b, &AppCatalog::new(), &cfg).await.unwrap();
        assert_eq!(set.system, SystemKind::TwoStageNl);
        let r = &set.recommendations[0];
        assert_eq!(r.app, "LinkedIn");
        assert_eq!(r.category, "Unknown");
        assert_eq!(r.rationale.as_deref(), Some("LinkedIn can help update my resume."));
    }
}
