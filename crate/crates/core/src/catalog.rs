//! App name → store category lookup.

use std::collections::BTreeMap;
use std::path::Path;

use crate::text::collapse_whitespace;

pub const UNKNOWN_CATEGORY: &str = "Unknown";

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid catalog JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("catalog line {line}: {message}")]
    Tsv { line: usize, message: String },
    #[error("catalog entry `{0}` has an empty category")]
    EmptyCategory(String),
    #[error("catalog {0} must end in .json or .tsv")]
    UnsupportedFormat(String),
}

fn key(app: &str) -> String {
    collapse_whitespace(app).to_lowercase()
}

/// Case-insensitive mapping from app names to categories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppCatalog {
    entries: BTreeMap<String, String>,
}

impl AppCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, app: &str, category: &str) -> Result<(), CatalogError> {
        let category = collapse_whitespace(category);
        if category.is_empty() {
            return Err(CatalogError::EmptyCategory(app.to_string()));
        }
        self.entries.insert(key(app), category);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Category of `app`, or `"Unknown"` if the catalog has no entry.
    pub fn map_category(&self, app: &str) -> String {
        self.entries
            .get(&key(app))
            .cloned()
            .unwrap_or_else(|| UNKNOWN_CATEGORY.to_string())
    }

    /// JSON object `{ "app name": "category", ... }`.
    pub fn from_json_str(json: &str) -> Result<Self, CatalogError> {
        let raw: BTreeMap<String, String> = serde_json::from_str(json)?;
        let mut catalog = Self::new();
        for (app, category) in raw {
            catalog.insert(&app, &category)?;
        }
        Ok(catalog)
    }

    /// Two tab-separated columns, app then category. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn from_tsv_str(tsv: &str) -> Result<Self, CatalogError> {
        let mut catalog = Self::new();
        for (idx, line) in tsv.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (app, category) = line.split_once('\t').ok_or_else(|| CatalogError::Tsv {
                line: idx + 1,
                message: "expected two tab-separated columns".into(),
            })?;
            if app.trim().is_empty() {
                return Err(CatalogError::Tsv {
                    line: idx + 1,
                    message: "empty app name".into(),
                });
            }
            catalog.insert(app, category)?;
        }
        Ok(catalog)
    }

    /// Loads a catalog, choosing the format from the file extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        let read = || {
            std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        match ext.as_deref() {
            Some("json") => Self::from_json_str(&read()?),
            Some("tsv") => Self::from_tsv_str(&read()?),
            _ => Err(CatalogError::UnsupportedFormat(path.display().to_string())),
        }
    }
}
