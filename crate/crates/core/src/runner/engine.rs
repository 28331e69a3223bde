use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baseline::{build_wide_context, retrieve_rag, ChunkError, RagConfig};
use crate::clear::{retrieve_clear, ClearParams, WindowConfig};
use crate::corpus::{ClinicalNote, Question};
use crate::entities::Lexicon;
use crate::metrics::{meteor, semantic_similarity};
use crate::providers::{Embedder, HashingEmbedder};
use crate::retrieval::{ContextPackage, Strategy, TokenBudget};
use crate::sectionizer::SectionWeightTable;

/// Everything that shapes retrieval and scoring, in hashable form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineSettings {
    pub window: WindowConfig,
    pub budget_tokens: usize,
    pub rag: RagConfig,
    pub section_weights: BTreeMap<String, f64>,
    pub section_default_weight: f64,
    pub embedding_dimension: usize,
    pub embedding_seed: u64,
    /// `builtin` or the sha256 of the lexicon file.
    pub lexicon: String,
}

/// Immutable retrieval + scoring engine shared by the runner and the service.
#[derive(Debug, Clone)]
pub struct Engine {
    lexicon: Arc<Lexicon>,
    weights: SectionWeightTable,
    window: WindowConfig,
    budget: TokenBudget,
    rag: RagConfig,
    embedder: HashingEmbedder,
    settings: EngineSettings,
    hash: String,
}

/// Canonical JSON (sorted keys) of any serializable value.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable");
    serde_json::to_string(&v).expect("value serializes")
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

impl Default for Engine {
    fn default() -> Self {
        Self::new(
            Arc::new(Lexicon::builtin().clone()),
            "builtin".into(),
            SectionWeightTable::default(),
            WindowConfig::default(),
            TokenBudget::default(),
            RagConfig::default(),
            HashingEmbedder::default(),
        )
    }
}

impl Engine {
    /// Inputs are assumed validated.
    pub fn new(
        lexicon: Arc<Lexicon>,
        lexicon_id: String,
        weights: SectionWeightTable,
        window: WindowConfig,
        budget: TokenBudget,
        rag: RagConfig,
        embedder: HashingEmbedder,
    ) -> Self {
        let settings = EngineSettings {
            window,
            budget_tokens: budget.max_context_tokens,
            rag,
            section_weights: weights.entries().map(|(k, v)| (k.to_string(), v)).collect(),
            section_default_weight: weights.default_weight(),
            embedding_dimension: embedder.dimension(),
            embedding_seed: embedder.seed(),
            lexicon: lexicon_id,
        };
        let hash = sha256_hex(canonical_json(&settings).as_bytes());
        Self {
            lexicon,
            weights,
            window,
            budget,
            rag,
            embedder,
            settings,
            hash,
        }
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    /// sha256 of the canonical settings JSON.
    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn embedder(&self) -> &HashingEmbedder {
        &self.embedder
    }

    pub fn retrieve(
        &self,
        strategy: Strategy,
        note: &ClinicalNote,
        question: &Question,
    ) -> Result<ContextPackage, ChunkError> {
        Ok(match strategy {
            Strategy::Wide => build_wide_context(note),
            Strategy::Rag => retrieve_rag(note, question, &self.rag, &self.embedder)?,
            Strategy::Clear => {
                let params = ClearParams {
                    lexicon: &self.lexicon,
                    weights: &self.weights,
                    config: self.window,
                    budget: self.budget,
                };
                retrieve_clear(note, question, &params, &self.embedder)
            }
        })
    }

    /// (semantic similarity, METEOR) of `answer` against `gold`.
    pub fn score(&self, answer: &str, gold: &str) -> (f64, f64) {
        let sim = semantic_similarity(&self.embedder, answer, gold).clamp(0.0, 1.0);
        (sim, meteor(answer, gold))
    }
}
