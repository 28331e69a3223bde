use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::{parse_jsonl, LogError, RunRecord};
use crate::analysis::PublishedSummary;
use crate::corpus::{classify_size, NoteSize};
use crate::metrics::EvalResult;
use crate::retrieval::Strategy;

pub const FIXTURE_SCHEMA_VERSION: u64 = 1;

/// Per-note similarity and token values for the three strategies over the
/// twelve-note corpus, as published.
pub const BUILTIN_TABLE2: &str = include_str!("../../data/table2.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureCell {
    pub similarity: f64,
    pub tokens: usize,
    #[serde(default)]
    pub meteor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureNote {
    pub note_id: String,
    pub size_tokens: usize,
    pub results: BTreeMap<Strategy, FixtureCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub schema_version: u64,
    #[serde(default)]
    pub description: String,
    pub model_id: String,
    pub question_id: String,
    pub notes: Vec<FixtureNote>,
    #[serde(default)]
    pub published_summary: Option<PublishedSummary>,
}

/// Scored results plus what analysis needs alongside them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultSet {
    pub results: Vec<EvalResult>,
    pub sizes: BTreeMap<String, NoteSize>,
    pub published: Option<PublishedSummary>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture is not valid: {0}")]
    Json(#[from] serde_json::Error),
    #[error("fixture schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    Log(#[from] LogError),
}

fn schema(msg: impl Into<String>) -> FixtureError {
    FixtureError::Schema(msg.into())
}

impl Fixture {
    pub fn validate(&self) -> Result<(), FixtureError> {
        if self.schema_version != FIXTURE_SCHEMA_VERSION {
            return Err(schema(format!(
                "schema_version {} (expected {FIXTURE_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.notes.is_empty() {
            return Err(schema("notes must be non-empty"));
        }
        let strategies: BTreeSet<Strategy> = self.notes[0].results.keys().copied().collect();
        if strategies.is_empty() {
            return Err(schema("notes carry no results"));
        }
        let mut seen = BTreeSet::new();
        for n in &self.notes {
            if !seen.insert(n.note_id.as_str()) {
                return Err(schema(format!("duplicate note `{}`", n.note_id)));
            }
            if n.size_tokens == 0 {
                return Err(schema(format!("{}: size_tokens must be positive", n.note_id)));
            }
            if n.results.keys().copied().collect::<BTreeSet<_>>() != strategies {
                return Err(schema(format!("{}: strategies differ from the first note", n.note_id)));
            }
            for (s, c) in &n.results {
                if !(0.0..=1.0).contains(&c.similarity) {
                    return Err(schema(format!("{}/{s}: similarity {} outside [0, 1]", n.note_id, c.similarity)));
                }
                if let Some(m) = c.meteor.filter(|m| !(0.0..=1.0).contains(m)) {
                    return Err(schema(format!("{}/{s}: meteor {m} outside [0, 1]", n.note_id)));
                }
            }
        }
        Ok(())
    }

    pub fn to_result_set(&self) -> ResultSet {
        let mut results = Vec::new();
        let mut sizes = BTreeMap::new();
        for n in &self.notes {
            sizes.insert(
                n.note_id.clone(),
                NoteSize {
                    tokens: n.size_tokens,
                    class: classify_size(n.size_tokens),
                },
            );
            for (&strategy, c) in &n.results {
                results.push(EvalResult {
                    note_id: n.note_id.clone(),
                    question_id: self.question_id.clone(),
                    strategy,
                    model_id: self.model_id.clone(),
                    answer: String::new(),
                    semantic_similarity: c.similarity,
                    meteor: c.meteor,
                    total_tokens: c.tokens,
                    context_tokens: c.tokens,
                });
            }
        }
        ResultSet {
            results,
            sizes,
            published: self.published_summary.clone(),
        }
    }
}

pub fn parse_fixture(raw: &str) -> Result<ResultSet, FixtureError> {
    let f: Fixture = serde_json::from_str(raw)?;
    f.validate()?;
    Ok(f.to_result_set())
}

fn read(path: &Path) -> Result<String, FixtureError> {
    std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load a results fixture as scored results.
pub fn replay_fixture(path: impl AsRef<Path>) -> Result<ResultSet, FixtureError> {
    parse_fixture(&read(path.as_ref())?)
}

pub fn builtin_fixture() -> ResultSet {
    parse_fixture(BUILTIN_TABLE2).expect("builtin fixture is valid")
}

/// Successful records as a result set; sizes come from the records.
pub fn results_from_records(records: &[RunRecord]) -> ResultSet {
    let mut sizes = BTreeMap::new();
    for r in records {
        sizes.entry(r.note_id.clone()).or_insert(NoteSize {
            tokens: r.note_tokens,
            class: classify_size(r.note_tokens),
        });
    }
    ResultSet {
        results: records.iter().filter_map(RunRecord::to_eval_result).collect(),
        sizes,
        published: None,
    }
}

/// Either a fixture (a single JSON object with `schema_version`) or a
/// JSON-lines run log.
pub fn load_results(path: impl AsRef<Path>) -> Result<ResultSet, FixtureError> {
    let path = path.as_ref();
    let raw = read(path)?;
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(&raw) {
        if v.get("schema_version").is_some() && v.get("notes").is_some() {
            return parse_fixture(&raw);
        }
    }
    let records = parse_jsonl(&raw, &path.display().to_string())?;
    Ok(results_from_records(&records))
}
