use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::engine::{canonical_json, sha256_hex, Engine};
use crate::analysis::BonusMode;
use crate::baseline::{ChunkError, RagConfig};
use crate::clear::{WindowConfig, WindowConfigError};
use crate::corpus::{load_corpus, Corpus, CorpusError};
use crate::entities::{Lexicon, LexiconError};
use crate::generator::{build_corpus, Placement, DEFAULT_TARGETS};
use crate::presets::{default_templates, find_preset};
use crate::providers::{HashingEmbedder, ProviderKind, RemoteConfig, DEFAULT_DIMENSION, DEFAULT_SEED, ENV_KEY, ENV_URL};
use crate::retrieval::{PromptError, PromptTemplates, Strategy, TokenBudget, DEFAULT_BUDGET_TOKENS};
use crate::sectionizer::{SectionError, SectionWeightTable};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("rag: {0}")]
    Rag(#[from] ChunkError),
    #[error("clear: {0}")]
    Window(#[from] WindowConfigError),
    #[error("sections: {0}")]
    Section(#[from] SectionError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClearConfig {
    pub radius_words: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub merge_gap_words: usize,
    pub budget_tokens: usize,
}

impl Default for ClearConfig {
    fn default() -> Self {
        let w = WindowConfig::default();
        Self {
            radius_words: w.radius_words,
            alpha: w.alpha,
            beta: w.beta,
            gamma: w.gamma,
            delta: w.delta,
            merge_gap_words: w.merge_gap_words,
            budget_tokens: DEFAULT_BUDGET_TOKENS,
        }
    }
}

impl ClearConfig {
    pub fn window(&self) -> WindowConfig {
        WindowConfig {
            radius_words: self.radius_words,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
            merge_gap_words: self.merge_gap_words,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SectionConfig {
    pub default_weight: Option<f64>,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub dimension: usize,
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    /// Falls back to `CLEARBENCH_LLM_URL`.
    pub url: Option<String>,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        Self {
            url: None,
            max_retries: 3,
            backoff_ms: 250,
            timeout_secs: 120,
            max_in_flight: 4,
        }
    }
}

/// A run configuration, read from TOML. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Corpus JSON. When absent the default corpus is generated from `seed`.
    pub corpus: Option<PathBuf>,
    pub seed: u64,
    pub placement: Placement,
    pub strategies: Vec<Strategy>,
    pub provider: ProviderKind,
    pub models: Vec<String>,
    /// Builtin preset id; mutually exclusive with `templates`.
    pub preset: Option<String>,
    pub templates: Option<PromptTemplates>,
    pub output_dir: Option<PathBuf>,
    pub concurrency: usize,
    pub bonus_mode: BonusMode,
    pub lexicon: Option<PathBuf>,
    pub rag: RagConfig,
    pub clear: ClearConfig,
    pub sections: SectionConfig,
    pub embedder: EmbedderConfig,
    pub remote: RemoteSettings,
}

pub const MOCK_MODEL_ID: &str = "mock-extractive";

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            seed: 42,
            placement: Placement::default(),
            strategies: Strategy::ALL.to_vec(),
            provider: ProviderKind::Mock,
            models: vec![MOCK_MODEL_ID.to_string()],
            preset: None,
            templates: None,
            output_dir: None,
            concurrency: 4,
            bonus_mode: BonusMode::default(),
            lexicon: None,
            rag: RagConfig::default(),
            clear: ClearConfig::default(),
            sections: SectionConfig::default(),
            embedder: EmbedderConfig::default(),
            remote: RemoteSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(raw: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate; relative paths resolve against the config's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&raw)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.corpus, &mut cfg.lexicon, &mut cfg.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.strategies.is_empty() {
            return Err(ConfigError::Invalid("at least one strategy is required".into()));
        }
        if self.models.is_empty() || self.models.iter().any(|m| m.trim().is_empty()) {
            return Err(ConfigError::Invalid("at least one non-empty model id is required".into()));
        }
        if has_duplicates(&self.strategies) || has_duplicates(&self.models) {
            return Err(ConfigError::Invalid("strategies and models must not repeat".into()));
        }
        if self.concurrency == 0 {
            return Err(ConfigError::Invalid("concurrency must be at least 1".into()));
        }
        if self.embedder.dimension == 0 {
            return Err(ConfigError::Invalid("embedder.dimension must be positive".into()));
        }
        if self.clear.budget_tokens == 0 {
            return Err(ConfigError::Invalid("clear.budget_tokens must be positive".into()));
        }
        self.templates()?;
        self.rag.validate()?;
        self.clear.window().validate()?;
        self.section_table()?;
        Ok(())
    }

    /// The resolved template pair shared by every strategy.
    pub fn templates(&self) -> Result<PromptTemplates, ConfigError> {
        match (&self.preset, &self.templates) {
            (Some(_), Some(_)) => Err(ConfigError::Invalid(
                "set either `preset` or `templates`, not both".into(),
            )),
            (Some(id), None) => find_preset(id)
                .map(|p| p.templates)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown preset `{id}`"))),
            (None, Some(t)) => {
                t.validate()?;
                Ok(t.clone())
            }
            (None, None) => Ok(default_templates()),
        }
    }

    pub fn section_table(&self) -> Result<SectionWeightTable, SectionError> {
        SectionWeightTable::with_overrides(
            self.sections.weights.iter().map(|(k, &v)| (k.as_str(), v)),
            self.sections.default_weight,
        )
    }

    pub fn engine(&self) -> Result<Engine, ConfigError> {
        let (lexicon, lexicon_id) = match &self.lexicon {
            Some(path) => {
                let raw = std::fs::read(path).map_err(|source| {
                    ConfigError::Lexicon(LexiconError::Io {
                        path: path.display().to_string(),
                        source,
                    })
                })?;
                let text = String::from_utf8_lossy(&raw);
                (Lexicon::from_json(&text)?, sha256_hex(&raw))
            }
            None => (Lexicon::builtin().clone(), "builtin".to_string()),
        };
        let budget = TokenBudget::new(self.clear.budget_tokens)
            .ok_or_else(|| ConfigError::Invalid("clear.budget_tokens must be positive".into()))?;
        Ok(Engine::new(
            Arc::new(lexicon),
            lexicon_id,
            self.section_table()?,
            self.clear.window(),
            budget,
            self.rag,
            HashingEmbedder::new(self.embedder.dimension, self.embedder.seed),
        ))
    }

    /// The corpus file, or the default generated corpus.
    pub fn load_corpus(&self) -> Result<Corpus, ConfigError> {
        let corpus = match &self.corpus {
            Some(path) => load_corpus(path)?,
            None => build_corpus(self.seed, self.placement, &DEFAULT_TARGETS)?,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn remote_config(&self) -> Result<RemoteConfig, ConfigError> {
        let url = match &self.remote.url {
            Some(u) => u.clone(),
            None => std::env::var(ENV_URL).map_err(|_| {
                ConfigError::Invalid(format!("remote provider needs `remote.url` or {ENV_URL}"))
            })?,
        };
        let mut rc = RemoteConfig::new(url);
        rc.api_key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        rc.max_retries = self.remote.max_retries;
        rc.backoff_base = Duration::from_millis(self.remote.backoff_ms);
        rc.timeout = Duration::from_secs(self.remote.timeout_secs.max(1));
        rc.max_in_flight = self.remote.max_in_flight.max(1);
        Ok(rc)
    }

    /// sha256 of the canonical JSON of every setting that affects results.
    /// Independent of key order in the source file.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
            obj.remove("concurrency");
        }
        sha256_hex(canonical_json(&v).as_bytes())
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}
