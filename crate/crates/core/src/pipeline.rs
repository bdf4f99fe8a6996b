//! A configured pipeline: backends, catalog and settings bundled together.

use std::sync::Arc;

use crate::api::Overrides;
use crate::backend::LmBackend;
use crate::baselines::{one_stage, two_stage_nl, SystemKind};
use crate::catalog::AppCatalog;
use crate::config::{ConfigError, PipelineConfig};
use crate::intents::{generate_intents, IntentError, IntentSet, Utterance};
use crate::recommender::{recommend, RecommendConfig, RecommendError, RecommendationSet};
use crate::relation::Relation;

#[derive(Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    intent_backend: Arc<dyn LmBackend>,
    app_backend: Arc<dyn LmBackend>,
    catalog: Arc<AppCatalog>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("intent_backend", &self.intent_backend.id())
            .field("app_backend", &self.app_backend.id())
            .field("catalog_entries", &self.catalog.len())
            .finish()
    }
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        intent_backend: Arc<dyn LmBackend>,
        app_backend: Arc<dyn LmBackend>,
        catalog: AppCatalog,
    ) -> Self {
        Self {
            config,
            intent_backend,
            app_backend,
            catalog: Arc::new(catalog),
        }
    }

    /// Builds backends and loads the catalog named by `config`.
    pub fn from_config(config: PipelineConfig) -> Result<Self, ConfigError> {
        let intent = config.backends.intent.build("intent")?;
        let app = config.backends.app.build("app")?;
        let catalog = match &config.catalog {
            Some(path) => AppCatalog::load(path).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => AppCatalog::new(),
        };
        Ok(Self::new(config, intent, app, catalog))
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn catalog(&self) -> &AppCatalog {
        &self.catalog
    }

    pub fn intent_backend(&self) -> &dyn LmBackend {
        self.intent_backend.as_ref()
    }

    pub fn app_backend(&self) -> &dyn LmBackend {
        self.app_backend.as_ref()
    }

    fn effective(&self, overrides: &Overrides) -> (SystemKind, RecommendConfig) {
        let mut cfg = self.config.recommend_config();
        if let Some(k) = overrides.k_keep {
            cfg.intents.k_keep = k;
        }
        if let Some(r) = &overrides.relations {
            cfg.relations = r.clone();
        }
        (overrides.system.unwrap_or(self.config.system), cfg)
    }

    /// Runs the configured system (or the override) on one utterance.
    pub async fn run(
        &self,
        utterance: &Utterance,
        overrides: &Overrides,
    ) -> Result<RecommendationSet, RecommendError> {
        let (system, cfg) = self.effective(overrides);
        cfg.validate()?;
        let app = self.app_backend.as_ref();
        match system {
            SystemKind::Proposed => {
                recommend(utterance, self.intent_backend.as_ref(), app, &self.catalog, &cfg).await
            }
            SystemKind::OneStage => one_stage(utterance, app, &self.catalog, &cfg).await,
            SystemKind::TwoStageNl => two_stage_nl(utterance, app, app, &self.catalog, &cfg).await,
        }
    }

    /// Stage one only.
    pub async fn intents(
        &self,
        utterance: &Utterance,
        relations: Option<&[Relation]>,
        k_keep: Option<u32>,
    ) -> Result<IntentSet, IntentError> {
        let mut cfg = self.config.stage1.clone();
        if let Some(k) = k_keep {
            cfg.k_keep = k;
        }
        let relations = relations.unwrap_or(&self.config.relations);
        generate_intents(
            utterance,
            relations,
            self.intent_backend.as_ref(),
            &cfg,
            self.config.max_concurrency,
        )
        .await
    }
}
