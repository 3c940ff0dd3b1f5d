//! Service and CLI configuration (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use nl2sql_core::llm::{LlmBackend, MockBackend, MockOracle};
use nl2sql_core::similarity::SimilarityProvider;
use nl2sql_core::PipelineConfig;

use crate::formats::{read_json, FormatError};
use crate::http_backend::{HttpBackend, HttpSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Mock {
        oracle: PathBuf,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        temperature: f64,
    },
    Http(HttpSettings),
}

fn default_bind() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8080
}

fn default_similarity() -> f64 {
    0.1
}

fn default_threshold() -> f64 {
    nl2sql_core::personalizer::DEFAULT_MATCH_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    pub backend: BackendConfig,
    /// Database fixture files served by `/ask`.
    #[serde(default)]
    pub databases: Vec<PathBuf>,
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    #[serde(default)]
    pub selector_enabled: bool,
    /// Named alphas a request may pick instead of the artifact's own.
    #[serde(default)]
    pub alpha_profiles: BTreeMap<String, f64>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub hint_journal: Option<PathBuf>,
    #[serde(default)]
    pub session_journal: Option<PathBuf>,
    /// Similarity for column pairs the lexicon does not list.
    #[serde(default = "default_similarity")]
    pub similarity_default: f64,
    #[serde(default = "default_threshold")]
    pub match_threshold: f64,
}

impl ServiceConfig {
    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        let mut cfg: ServiceConfig = toml::from_str(&text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0);
            FormatError::at(path, line, e.message())
        })?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        cfg.pipeline.validate().map_err(|e| FormatError::at(path, 0, e))?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let BackendConfig::Mock { oracle, .. } = &mut self.backend {
            fix(oracle);
        }
        self.databases.iter_mut().for_each(fix);
        for p in [&mut self.calibration, &mut self.hint_journal, &mut self.session_journal].into_iter().flatten() {
            fix(p);
        }
    }
}

/// The backend and the similarity provider that goes with it: the mock's
/// linking lexicon, or lexical similarity for a real model.
pub fn build_backend(
    config: &BackendConfig,
    similarity_default: f64,
) -> Result<(Arc<dyn LlmBackend>, SimilarityProvider), FormatError> {
    match config {
        BackendConfig::Mock { oracle, seed, temperature } => {
            let o: MockOracle = read_json(oracle)?;
            let provider = o.similarity(similarity_default);
            let backend = MockBackend::new(o, *seed).map_err(|e| FormatError::at(oracle, 0, e))?;
            Ok((Arc::new(backend.with_temperature(*temperature)), provider))
        }
        BackendConfig::Http(settings) => {
            Ok((Arc::new(HttpBackend::new(settings.clone())), SimilarityProvider::embedding()))
        }
    }
}
