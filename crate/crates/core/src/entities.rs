//! Rule-based clinical entity extraction.
//!
//! Two recognizers feed one result list:
//! - lexicon matching: longest, case-insensitive, word-boundary matches of
//!   per-category term lists;
//! - value patterns: named regular expressions for vital signs and lab values,
//!   producing [`EntityCategory::LabValue`] entities with a parsed number.
//!
//! Overlaps between any two candidates are resolved longest-first, ties by
//! earlier start. Spans are word indices (see [`crate::text::WordIndex`]).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::text::{collapse_whitespace, WordIndex};

const BUILTIN_LEXICON: &str = include_str!("../data/lexicon.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityCategory {
    Medication,
    Symptom,
    Disease,
    Procedure,
    LabValue,
    Anatomy,
}

impl EntityCategory {
    pub const ALL: [EntityCategory; 6] = [
        EntityCategory::Medication,
        EntityCategory::Symptom,
        EntityCategory::Disease,
        EntityCategory::Procedure,
        EntityCategory::LabValue,
        EntityCategory::Anatomy,
    ];

    /// Key of this category's term list in the lexicon file.
    pub fn lexicon_key(self) -> &'static str {
        match self {
            EntityCategory::Medication => "medications",
            EntityCategory::Symptom => "symptoms",
            EntityCategory::Disease => "diseases",
            EntityCategory::Procedure => "procedures",
            EntityCategory::LabValue => "lab_values",
            EntityCategory::Anatomy => "anatomy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalEntity {
    pub surface: String,
    pub category: EntityCategory,
    pub start_word: usize,
    pub end_word: usize,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchKind {
    ExactMultiWord,
    ExactSingleWord,
    ValuePattern,
}

pub fn score_confidence(kind: MatchKind, term_length_words: usize) -> f64 {
    let base: f64 = match kind {
        MatchKind::ExactMultiWord if term_length_words > 1 => 0.95,
        MatchKind::ExactMultiWord | MatchKind::ExactSingleWord => 0.85,
        MatchKind::ValuePattern => 0.90,
    };
    base.clamp(f64::MIN_POSITIVE, 1.0)
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("empty term in `{0}`")]
    EmptyTerm(&'static str),
    #[error("value pattern `{name}` does not compile: {source}")]
    Pattern {
        name: String,
        #[source]
        source: regex::Error,
    },
    #[error("value pattern `{0}` has no `value` capture group")]
    MissingValueGroup(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValuePatternSpec {
    pub name: String,
    pub pattern: String,
    #[serde(default)]
    pub unit: Option<String>,
}

#[derive(Debug, Clone)]
struct ValuePattern {
    spec: ValuePatternSpec,
    regex: Regex,
}

#[derive(Debug, Deserialize)]
struct LexiconFile {
    #[serde(default)]
    medications: Vec<String>,
    #[serde(default)]
    symptoms: Vec<String>,
    #[serde(default)]
    diseases: Vec<String>,
    #[serde(default)]
    procedures: Vec<String>,
    #[serde(default)]
    lab_values: Vec<String>,
    #[serde(default)]
    anatomy: Vec<String>,
    #[serde(default)]
    value_patterns: Vec<ValuePatternSpec>,
}

/// Per-category term lists plus value patterns. Immutable once built.
#[derive(Debug, Clone)]
pub struct Lexicon {
    terms: BTreeMap<EntityCategory, Vec<String>>,
    patterns: Vec<ValuePattern>,
    // first word -> (term words, category), longest first
    index: HashMap<String, Vec<(Vec<String>, EntityCategory)>>,
}

impl Lexicon {
    /// The seed lexicon shipped with the crate.
    pub fn builtin() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::from_json(BUILTIN_LEXICON).expect("builtin lexicon is valid"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile = serde_json::from_str(raw)?;
        let lists = [
            (EntityCategory::Medication, file.medications),
            (EntityCategory::Symptom, file.symptoms),
            (EntityCategory::Disease, file.diseases),
            (EntityCategory::Procedure, file.procedures),
            (EntityCategory::LabValue, file.lab_values),
            (EntityCategory::Anatomy, file.anatomy),
        ];
        let mut terms = BTreeMap::new();
        for (cat, list) in lists {
            let mut canon = Vec::with_capacity(list.len());
            for t in list {
                let t = collapse_whitespace(&t.to_lowercase());
                if t.is_empty() {
                    return Err(LexiconError::EmptyTerm(cat.lexicon_key()));
                }
                canon.push(t);
            }
            canon.sort();
            canon.dedup();
            terms.insert(cat, canon);
        }
        Self::build(terms, file.value_patterns)
    }

    pub fn from_terms(
        terms: impl IntoIterator<Item = (EntityCategory, Vec<&'static str>)>,
        value_patterns: Vec<ValuePatternSpec>,
    ) -> Result<Self, LexiconError> {
        let mut map = BTreeMap::new();
        for (cat, list) in terms {
            let mut canon = Vec::new();
            for t in list {
                let t = collapse_whitespace(&t.to_lowercase());
                if t.is_empty() {
                    return Err(LexiconError::EmptyTerm(cat.lexicon_key()));
                }
                canon.push(t);
            }
            map.insert(cat, canon);
        }
        Self::build(map, value_patterns)
    }

    fn build(
        terms: BTreeMap<EntityCategory, Vec<String>>,
        specs: Vec<ValuePatternSpec>,
    ) -> Result<Self, LexiconError> {
        let mut index: HashMap<String, Vec<(Vec<String>, EntityCategory)>> = HashMap::new();
        for (&cat, list) in &terms {
            for term in list {
                let words: Vec<String> = term.split(' ').map(str::to_string).collect();
                index.entry(words[0].clone()).or_default().push((words, cat));
            }
        }
        for entries in index.values_mut() {
            // Longest first; earlier category wins an exact duplicate.
            entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
        }
        let patterns = specs
            .into_iter()
            .map(|spec| {
                let regex = RegexBuilder::new(&spec.pattern)
                    .case_insensitive(true)
                    .build()
                    .map_err(|source| LexiconError::Pattern {
                        name: spec.name.clone(),
                        source,
                    })?;
                if !regex.capture_names().any(|n| n == Some("value")) {
                    return Err(LexiconError::MissingValueGroup(spec.name));
                }
                Ok(ValuePattern { spec, regex })
            })
            .collect::<Result<Vec<_>, LexiconError>>()?;
        Ok(Self {
            terms,
            patterns,
            index,
        })
    }

    pub fn terms(&self, category: EntityCategory) -> &[String] {
        self.terms.get(&category).map_or(&[], Vec::as_slice)
    }

    pub fn value_patterns(&self) -> impl Iterator<Item = &ValuePatternSpec> {
        self.patterns.iter().map(|p| &p.spec)
    }
}

/// Lowercase and strip leading/trailing punctuation; inner punctuation
/// (hyphens, slashes) is kept.
fn normalize_word(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

fn ends_clause(word: &str) -> bool {
    word.ends_with(['.', ',', ';', ':', '!', '?'])
}

struct Candidate {
    entity: ClinicalEntity,
    from_pattern: bool,
}

pub fn extract_entities(text: &str, lexicon: &Lexicon) -> Vec<ClinicalEntity> {
    extract_entities_indexed(&WordIndex::new(text), lexicon)
}

pub fn extract_entities_indexed(words: &WordIndex<'_>, lexicon: &Lexicon) -> Vec<ClinicalEntity> {
    let mut candidates = lexicon_candidates(words, lexicon);
    candidates.extend(value_candidates(words, &lexicon.patterns).into_iter().map(|entity| Candidate {
        entity,
        from_pattern: true,
    }));
    resolve_overlaps(candidates, words.len())
}

/// Vital-sign and lab-value matches using the builtin pattern set.
pub fn extract_values(text: &str) -> Vec<ClinicalEntity> {
    let words = WordIndex::new(text);
    let mut found = value_candidates(&words, &Lexicon::builtin().patterns);
    found.sort_by(|a, b| a.start_word.cmp(&b.start_word).then(b.end_word.cmp(&a.end_word)));
    found
}

fn lexicon_candidates(words: &WordIndex<'_>, lexicon: &Lexicon) -> Vec<Candidate> {
    let normalized: Vec<String> = (0..words.len()).map(|i| normalize_word(words.word(i))).collect();
    let mut out = Vec::new();
    for start in 0..normalized.len() {
        let Some(entries) = lexicon.index.get(&normalized[start]) else {
            continue;
        };
        let hit = entries.iter().find(|(term, _)| {
            let end = start + term.len();
            end <= normalized.len()
                && normalized[start..end] == term[..]
                && (start..end - 1).all(|i| !ends_clause(words.word(i)))
        });
        if let Some((term, category)) = hit {
            let end = start + term.len();
            let kind = if term.len() > 1 {
                MatchKind::ExactMultiWord
            } else {
                MatchKind::ExactSingleWord
            };
            out.push(Candidate {
                entity: ClinicalEntity {
                    surface: surface_of(words, start, end),
                    category: *category,
                    start_word: start,
                    end_word: end,
                    confidence: score_confidence(kind, term.len()),
                    numeric_value: None,
                    unit: None,
                },
                from_pattern: false,
            });
        }
    }
    out
}

fn surface_of(words: &WordIndex<'_>, start: usize, end: usize) -> String {
    let joined = (start..end).map(|i| words.word(i)).collect::<Vec<_>>().join(" ");
    joined
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

fn value_candidates(words: &WordIndex<'_>, patterns: &[ValuePattern]) -> Vec<ClinicalEntity> {
    let text = words.text();
    let mut out = Vec::new();
    for p in patterns {
        for caps in p.regex.captures_iter(text) {
            let m = caps.get(0).expect("whole match");
            let Some(value) = caps.name("value").and_then(|v| v.as_str().parse::<f64>().ok()) else {
                continue;
            };
            let (start, end) = words.words_covering(m.start(), m.end());
            if start >= end {
                continue;
            }
            let unit = caps
                .name("unit")
                .map(|u| u.as_str().to_string())
                .or_else(|| p.spec.unit.clone());
            let span_len = end - start;
            out.push(ClinicalEntity {
                surface: collapse_whitespace(m.as_str()),
                category: EntityCategory::LabValue,
                start_word: start,
                end_word: end,
                confidence: score_confidence(MatchKind::ValuePattern, span_len),
                numeric_value: Some(value),
                unit,
            });
        }
    }
    out
}

fn resolve_overlaps(mut candidates: Vec<Candidate>, word_count: usize) -> Vec<ClinicalEntity> {
    candidates.sort_by(|a, b| {
        let (ea, eb) = (&a.entity, &b.entity);
        (eb.end_word - eb.start_word)
            .cmp(&(ea.end_word - ea.start_word))
            .then(ea.start_word.cmp(&eb.start_word))
            .then(b.from_pattern.cmp(&a.from_pattern))
            .then(ea.category.cmp(&eb.category))
    });
    let mut taken = vec![false; word_count];
    let mut accepted = Vec::new();
    for c in candidates {
        let span = c.entity.start_word..c.entity.end_word;
        if taken[span.clone()].iter().any(|&t| t) {
            continue;
        }
        taken[span].iter_mut().for_each(|t| *t = true);
        accepted.push(c.entity);
    }
    accepted.sort_by_key(|e| e.start_word);
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> &'static Lexicon {
        Lexicon::builtin()
    }

    #[test]
    fn builtin_lexicon_is_substantial() {
        for cat in EntityCategory::ALL {
            assert!(lex().terms(cat).len() >= 80, "{cat:?}");
            assert!(lex().terms(cat).iter().all(|t| !t.is_empty() && *t == t.to_lowercase()));
        }
        assert!(lex().value_patterns().count() >= 5);
    }

    #[test]
    fn medication_and_disease_in_sentence() {
        let e = extract_entities("started on lisinopril for heart failure", lex());
        let got: Vec<_> = e
            .iter()
            .map(|x| (x.category, x.surface.as_str(), x.start_word, x.end_word))
            .collect();
        assert_eq!(
            got,
            [
                (EntityCategory::Medication, "lisinopril", 2, 3),
                (EntityCategory::Disease, "heart failure", 4, 6),
            ]
        );
        assert_eq!(e[0].confidence, 0.85);
        assert_eq!(e[1].confidence, 0.95);
    }

    #[test]
    fn longest_match_wins() {
        let e = extract_entities("Diagnosed with Iron Deficiency Anemia.", lex());
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].surface, "Iron Deficiency Anemia");
        assert_eq!(e[0].category, EntityCategory::Disease);
    }

    #[test]
    fn terms_do_not_span_clause_punctuation() {
        let e = extract_entities("history of heart. Failure to thrive", lex());
        assert!(e.iter().all(|x| x.surface.to_lowercase() != "heart. failure"));
        assert!(!e.iter().any(|x| x.category == EntityCategory::Disease));
    }

    #[test]
    fn empty_text() {
        assert!(extract_entities("", lex()).is_empty());
        assert!(extract_values("").is_empty());
        assert!(extract_values("no numbers here").is_empty());
    }

    #[test]
    fn blood_pressure_value() {
        let v = extract_values("BP 120/80");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].category, EntityCategory::LabValue);
        assert_eq!(v[0].numeric_value, Some(120.0));
        assert_eq!(v[0].unit.as_deref(), Some("mmHg"));
        assert_eq!(v[0].surface, "BP 120/80");
        assert_eq!((v[0].start_word, v[0].end_word), (0, 2));
        assert_eq!(v[0].confidence, 0.90);
    }

    #[test]
    fn hemoglobin_value_with_unit() {
        let v = extract_values("Labs: hemoglobin 9.2 g/dL, stable.");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].numeric_value, Some(9.2));
        assert_eq!(v[0].unit.as_deref(), Some("g/dL"));
        assert_eq!((v[0].start_word, v[0].end_word), (1, 4));
    }

    #[test]
    fn other_value_patterns() {
        let v = extract_values("HR 104, BNP 850 pg/mL, creatinine 1.4 mg/dL, Hgb of 10.1");
        let got: Vec<_> = v.iter().map(|e| (e.numeric_value.unwrap(), e.unit.clone().unwrap())).collect();
        assert_eq!(
            got,
            [
                (104.0, "bpm".to_string()),
                (850.0, "pg/mL".to_string()),
                (1.4, "mg/dL".to_string()),
                (10.1, "g/dL".to_string()),
            ]
        );
    }

    #[test]
    fn value_pattern_beats_shorter_lexicon_term() {
        let e = extract_entities("BNP 850 pg/mL today", lex());
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].numeric_value, Some(850.0));
        assert_eq!(e[0].end_word, 3);
    }

    #[test]
    fn confidence_table() {
        assert_eq!(score_confidence(MatchKind::ExactMultiWord, 2), 0.95);
        assert_eq!(score_confidence(MatchKind::ExactSingleWord, 1), 0.85);
        assert_eq!(score_confidence(MatchKind::ValuePattern, 2), 0.90);
    }

    #[test]
    fn lexicon_validation() {
        assert!(matches!(
            Lexicon::from_json(r#"{"medications": ["  "]}"#),
            Err(LexiconError::EmptyTerm("medications"))
        ));
        assert!(matches!(
            Lexicon::from_json(r#"{"value_patterns": [{"name": "x", "pattern": "(\\d+"}]}"#),
            Err(LexiconError::Pattern { .. })
        ));
        assert!(matches!(
            Lexicon::from_json(r#"{"value_patterns": [{"name": "x", "pattern": "\\d+"}]}"#),
            Err(LexiconError::MissingValueGroup(_))
        ));
        let l = Lexicon::from_json(r#"{"symptoms": ["Chest  PAIN"]}"#).unwrap();
        assert_eq!(l.terms(EntityCategory::Symptom), ["chest pain"]);
    }

    const VOCAB: &[&str] = &[
        "patient", "reports", "fatigue", "and", "dyspnea", "on", "furosemide", "for", "heart",
        "failure", "hemoglobin", "9.2", "g/dL", "BP", "130/85", "anemia", "iron", "deficiency",
        "colonoscopy", "left", "knee", "pain", "the", "was", "echocardiogram", "BNP", "450",
        "chest", "x-ray", "lisinopril,", "edema.", "HR", "88",
    ];

    fn word_seq() -> impl Strategy<Value = Vec<&'static str>> {
        proptest::collection::vec(proptest::sample::select(VOCAB), 0..60)
    }

    proptest! {
        #[test]
        fn spans_contain_their_term_and_never_overlap(ws in word_seq()) {
            let text = ws.join(" ");
            let idx = WordIndex::new(&text);
            let e = extract_entities(&text, lex());
            prop_assert_eq!(&e, &extract_entities(&text, lex()));
            for x in &e {
                prop_assert!(x.start_word < x.end_word);
                prop_assert!(x.confidence > 0.0 && x.confidence <= 1.0);
                if x.numeric_value.is_some() {
                    prop_assert_eq!(x.category, EntityCategory::LabValue);
                }
                let slice = collapse_whitespace(idx.slice(x.start_word, x.end_word)).to_lowercase();
                prop_assert!(slice.contains(&x.surface.to_lowercase()), "{} !~ {}", slice, x.surface);
            }
            for pair in e.windows(2) {
                prop_assert!(pair[0].end_word <= pair[1].start_word);
            }
        }

        #[test]
        fn invariant_to_line_wrapping(ws in word_seq(), breaks in proptest::collection::vec(any::<bool>(), 60)) {
            let plain = ws.join(" ");
            let mut wrapped = String::new();
            for (i, w) in ws.iter().enumerate() {
                if i > 0 {
                    wrapped.push_str(if breaks[i] { "\n  " } else { " " });
                }
                wrapped.push_str(w);
            }
            wrapped.push_str("   \n");
            prop_assert_eq!(extract_entities(&plain, lex()), extract_entities(&wrapped, lex()));
        }
    }
}
