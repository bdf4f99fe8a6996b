//! Pipeline configuration.
//!
//! Values come from (lowest to highest precedence) built-in defaults, a TOML
//! file, and `INTENTBRIDGE_*` environment variables. Callers apply CLI flags
//! on top of the loaded value.
//!
//! Environment keys map onto the TOML tree by lower-casing and splitting on
//! `__`: `INTENTBRIDGE_STAGE2__TEMPERATURE=0.2` sets `stage2.temperature`.
//! `INTENTBRIDGE_BACKEND_URL` points both backends at one HTTP server and
//! `INTENTBRIDGE_CONFIG` names the file itself.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{FixtureBackend, FixtureTable, HttpBackend, HttpBackendOptions, LmBackend};
use crate::baselines::SystemKind;
use crate::evaluator::EvalMode;
use crate::intents::IntentConfig;
use crate::recommender::{AppGenerationConfig, PromptTemplate, RecommendConfig};
use crate::relation::Relation;

pub const ENV_PREFIX: &str = "INTENTBRIDGE_";
pub const ENV_CONFIG: &str = "INTENTBRIDGE_CONFIG";
pub const ENV_BACKEND_URL: &str = "INTENTBRIDGE_BACKEND_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Http {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        max_retries: u32,
    },
    Fixture {
        path: PathBuf,
    },
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_retries() -> u32 {
    2
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Http {
            url: "http://127.0.0.1:8000".into(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
        }
    }
}

impl BackendConfig {
    pub fn build(&self, name: &str) -> Result<Arc<dyn LmBackend>, ConfigError> {
        match self {
            BackendConfig::Http {
                url,
                timeout_ms,
                max_retries,
            } => {
                let options = HttpBackendOptions {
                    timeout: Duration::from_millis(*timeout_ms),
                    max_retries: *max_retries,
                    ..Default::default()
                };
                let backend = HttpBackend::new(url.clone(), options)
                    .map_err(|e| ConfigError::Invalid(format!("{name} backend: {e}")))?;
                Ok(Arc::new(backend))
            }
            BackendConfig::Fixture { path } => {
                let table = FixtureTable::load(path)
                    .map_err(|e| ConfigError::Invalid(format!("{name} backend: {e}")))?;
                Ok(Arc::new(FixtureBackend::named(
                    format!("fixture:{}", path.display()),
                    table,
                )))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendsConfig {
    /// Commonsense generator and trigger scorer.
    pub intent: BackendConfig,
    /// Causal LM that names apps.
    pub app: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    /// Append-only session log; sessions are kept in memory only when unset.
    pub session_log: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            session_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub system: SystemKind,
    pub relations: Vec<Relation>,
    pub max_concurrency: usize,
    pub allow_multiple: bool,
    pub stage1: IntentConfig,
    pub stage2: AppGenerationConfig,
    pub template: PromptTemplate,
    pub backends: BackendsConfig,
    pub catalog: Option<PathBuf>,
    pub eval_mode: EvalMode,
    pub service: ServiceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::Proposed,
            relations: Relation::TRIGGERS.to_vec(),
            max_concurrency: 4,
            allow_multiple: false,
            stage1: IntentConfig::default(),
            stage2: AppGenerationConfig::default(),
            template: PromptTemplate::default(),
            backends: BackendsConfig::default(),
            catalog: None,
            eval_mode: EvalMode::Micro,
            service: ServiceConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("environment variable {key}: {message}")]
    Env { key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl PipelineConfig {
    /// Loads defaults ← `path` ← environment.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut tree = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                text.parse::<toml::Table>()?
            }
            None => toml::Table::new(),
        };
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != ENV_CONFIG)
            .collect();
        env.sort();
        for (key, value) in env {
            apply_env(&mut tree, &key, &value)?;
        }
        let mut config: PipelineConfig = toml::Value::Table(tree).try_into()?;
        if let Some(dir) = path.and_then(Path::parent) {
            config.resolve_paths(dir);
        }
        config.validate()?;
        Ok(config)
    }

    /// Loads using the process environment, with the file taken from
    /// `explicit` or else `INTENTBRIDGE_CONFIG`.
    pub fn from_env(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        let from_var = std::env::var_os(ENV_CONFIG).map(PathBuf::from);
        let path = explicit.map(Path::to_path_buf).or(from_var);
        Self::load(path.as_deref(), std::env::vars())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for b in [&mut self.backends.intent, &mut self.backends.app] {
            if let BackendConfig::Fixture { path } = b {
                fix(path);
            }
        }
        if let Some(p) = self.catalog.as_mut() {
            fix(p);
        }
        if let Some(p) = self.service.session_log.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_concurrency == 0 {
            return Err(ConfigError::Invalid("max_concurrency must be at least 1".into()));
        }
        self.recommend_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn recommend_config(&self) -> RecommendConfig {
        RecommendConfig {
            relations: self.relations.clone(),
            intents: self.stage1.clone(),
            generation: self.stage2.clone(),
            template: self.template.clone(),
            allow_multiple: self.allow_multiple,
            max_concurrency: self.max_concurrency,
        }
    }

    /// Short stable digest of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(tree: &mut toml::Table, path: &[String], value: toml::Value, key: &str) -> Result<(), ConfigError> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = tree;
    for p in parents {
        let entry = node
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| ConfigError::Env {
            key: key.to_string(),
            message: format!("`{p}` is not a table"),
        })?;
    }
    node.insert(last.clone(), value);
    Ok(())
}

fn apply_env(tree: &mut toml::Table, key: &str, value: &str) -> Result<(), ConfigError> {
    if key == ENV_BACKEND_URL {
        for which in ["intent", "app"] {
            let base = vec!["backends".to_string(), which.to_string()];
            let kind = [base.clone(), vec!["kind".into()]].concat();
            let url = [base, vec!["url".into()]].concat();
            set_path(tree, &kind, toml::Value::String("http".into()), key)?;
            set_path(tree, &url, toml::Value::String(value.to_string()), key)?;
        }
        return Ok(());
    }
    let rest = &key[ENV_PREFIX.len()..];
    let path: Vec<String> = rest.split("__").map(str::to_lowercase).collect();
    if path.iter().any(String::is_empty) {
        return Err(ConfigError::Env {
            key: key.to_string(),
            message: "empty path segment".into(),
        });
    }
    set_path(tree, &path, parse_env_value(value), key)
}
