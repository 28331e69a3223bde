//! Evaluation dataset: notes, questions, persistence and size strata.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::sectionizer;
use crate::text::count_tokens;

pub const SCHEMA_VERSION: u64 = 1;

/// Upper bound (exclusive) of the Small stratum.
pub const SMALL_MAX: usize = 20_000;
/// Upper bound (inclusive) of the Medium stratum.
pub const MEDIUM_MAX: usize = 55_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::Small => "Small",
            SizeClass::Medium => "Medium",
            SizeClass::Large => "Large",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Total, monotone classification of a note's token count.
pub fn classify_size(token_count: usize) -> SizeClass {
    if token_count < SMALL_MAX {
        SizeClass::Small
    } else if token_count <= MEDIUM_MAX {
        SizeClass::Medium
    } else {
        SizeClass::Large
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub id: String,
    pub text: String,
    pub token_size: usize,
    pub size_class: SizeClass,
}

impl ClinicalNote {
    /// Build a note, deriving token size and class from the text.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = normalize_newlines(&text.into());
        let token_size = count_tokens(&text);
        Self {
            id: id.into(),
            text,
            token_size,
            size_class: classify_size(token_size),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub gold_answer: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub metadata: BTreeMap<String, Value>,
    pub notes: Vec<ClinicalNote>,
    pub questions: Vec<Question>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema error at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("duplicate id `{id}` in {kind}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },
    #[error("generation target {0} is below the minimum of {min}", min = crate::generator::MIN_TARGET_TOKENS)]
    TargetTooSmall(usize),
}

fn schema_err(field: impl Into<String>, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema {
        field: field.into(),
        message: message.into(),
    }
}

impl Corpus {
    pub fn note(&self, id: &str) -> Result<&ClinicalNote, CorpusError> {
        self.notes
            .iter()
            .find(|n| n.id == id)
            .ok_or_else(|| CorpusError::UnknownId {
                kind: "note",
                id: id.to_string(),
            })
    }

    pub fn question(&self, id: &str) -> Result<&Question, CorpusError> {
        self.questions
            .iter()
            .find(|q| q.id == id)
            .ok_or_else(|| CorpusError::UnknownId {
                kind: "question",
                id: id.to_string(),
            })
    }

    /// Note id → (token size, size class).
    pub fn note_sizes(&self) -> BTreeMap<String, NoteSize> {
        self.notes
            .iter()
            .map(|n| {
                (
                    n.id.clone(),
                    NoteSize {
                        tokens: n.token_size,
                        class: n.size_class,
                    },
                )
            })
            .collect()
    }

    /// Check every corpus invariant. Token sizes are not checked here;
    /// ingestion recomputes them.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.notes.is_empty() {
            return Err(schema_err("notes", "must be non-empty"));
        }
        if self.questions.is_empty() {
            return Err(schema_err("questions", "must be non-empty"));
        }
        let mut seen = HashSet::new();
        for (i, note) in self.notes.iter().enumerate() {
            if !seen.insert(note.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    kind: "notes",
                    id: note.id.clone(),
                });
            }
            if !sectionizer::has_heading(&note.text) {
                return Err(schema_err(
                    format!("notes[{i}].text"),
                    "contains no recognized section heading",
                ));
            }
        }
        let mut seen = HashSet::new();
        for (i, q) in self.questions.iter().enumerate() {
            if !seen.insert(q.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    kind: "questions",
                    id: q.id.clone(),
                });
            }
            if q.gold_answer.trim().is_empty() {
                return Err(schema_err(
                    format!("questions[{i}].gold_answer"),
                    "must be non-empty",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSize {
    pub tokens: usize,
    pub class: SizeClass,
}

fn normalize_newlines(text: &str) -> String {
    if text.contains('\r') {
        text.replace("\r\n", "\n").replace('\r', "\n")
    } else {
        text.to_string()
    }
}

/// A parsed corpus plus any corrections applied during ingestion.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub warnings: Vec<String>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let loaded = load_corpus_with_warnings(path)?;
    for w in &loaded.warnings {
        tracing::warn!("{w}");
    }
    Ok(loaded.corpus)
}

pub fn load_corpus_with_warnings(path: impl AsRef<Path>) -> Result<LoadedCorpus, CorpusError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&raw)
}

pub fn parse_corpus(raw: &str) -> Result<LoadedCorpus, CorpusError> {
    let root: Value = serde_json::from_str(raw)?;
    let obj = root
        .as_object()
        .ok_or_else(|| schema_err("$", "expected a JSON object"))?;

    match obj.get("schema_version").and_then(Value::as_u64) {
        Some(SCHEMA_VERSION) => {}
        Some(v) => return Err(schema_err("schema_version", format!("unsupported version {v}"))),
        None => return Err(schema_err("schema_version", "missing or not an integer")),
    }

    let metadata = match obj.get("metadata") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(Value::Object(m)) => m.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        Some(_) => return Err(schema_err("metadata", "expected an object")),
    };

    let mut warnings = Vec::new();
    let notes = array_field(obj, "notes")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_note(i, v, &mut warnings))
        .collect::<Result<Vec<_>, _>>()?;
    let questions = array_field(obj, "questions")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_question(i, v))
        .collect::<Result<Vec<_>, _>>()?;

    let corpus = Corpus {
        metadata,
        notes,
        questions,
    };
    corpus.validate()?;
    Ok(LoadedCorpus { corpus, warnings })
}

fn array_field<'v>(
    obj: &'v serde_json::Map<String, Value>,
    name: &str,
) -> Result<&'v Vec<Value>, CorpusError> {
    obj.get(name)
        .and_then(Value::as_array)
        .ok_or_else(|| schema_err(name, "missing or not an array"))
}

fn str_field(v: &Value, path: &str, name: &str) -> Result<String, CorpusError> {
    v.get(name)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| schema_err(format!("{path}.{name}"), "missing or not a string"))
}

fn parse_note(i: usize, v: &Value, warnings: &mut Vec<String>) -> Result<ClinicalNote, CorpusError> {
    let path = format!("notes[{i}]");
    if !v.is_object() {
        return Err(schema_err(path, "expected an object"));
    }
    let id = str_field(v, &path, "id")?;
    let text = normalize_newlines(&str_field(v, &path, "text")?);
    let declared = v
        .get("token_size")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema_err(format!("{path}.token_size"), "missing or not a nonnegative integer"))?;
    let declared_class: SizeClass = v
        .get("size_class")
        .cloned()
        .ok_or_else(|| schema_err(format!("{path}.size_class"), "missing"))
        .and_then(|c| {
            serde_json::from_value(c).map_err(|e| schema_err(format!("{path}.size_class"), e.to_string()))
        })?;

    let note = ClinicalNote::new(id, text);
    if note.token_size as u64 != declared {
        warnings.push(format!(
            "note `{}`: declared token_size {declared} corrected to {}",
            note.id, note.token_size
        ));
    }
    if note.size_class != declared_class {
        warnings.push(format!(
            "note `{}`: declared size_class {declared_class} corrected to {}",
            note.id, note.size_class
        ));
    }
    Ok(note)
}

fn parse_question(i: usize, v: &Value) -> Result<Question, CorpusError> {
    let path = format!("questions[{i}]");
    if !v.is_object() {
        return Err(schema_err(path, "expected an object"));
    }
    Ok(Question {
        id: str_field(v, &path, "id")?,
        text: str_field(v, &path, "text")?,
        gold_answer: str_field(v, &path, "gold_answer")?,
    })
}

/// Serialize to the versioned corpus document.
pub fn corpus_to_json(corpus: &Corpus) -> Result<String, CorpusError> {
    #[derive(Serialize)]
    struct Doc<'a> {
        schema_version: u64,
        metadata: &'a BTreeMap<String, Value>,
        notes: &'a [ClinicalNote],
        questions: &'a [Question],
    }
    let doc = Doc {
        schema_version: SCHEMA_VERSION,
        metadata: &corpus.metadata,
        notes: &corpus.notes,
        questions: &corpus.questions,
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    std::fs::write(path, corpus_to_json(corpus)?).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}
