//! Clinical section headings and their retrieval priority weights.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::text::WordIndex;

pub const PREAMBLE: &str = "PREAMBLE";
pub const ASSESSMENT: &str = "ASSESSMENT";
pub const PLAN: &str = "PLAN";
pub const HPI: &str = "HISTORY OF PRESENT ILLNESS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub start_word: usize,
    pub end_word: usize,
    pub weight: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SectionError {
    #[error("word index {index} is outside the document ({len} words)")]
    OutOfRange { index: usize, len: usize },
    #[error("section weight for `{name}` must lie in (0, 1], got {weight}")]
    WeightOutOfRange { name: String, weight: f64 },
    #[error("section weight for `{name}` is fixed at {expected}, got {weight}")]
    AnchorWeight {
        name: String,
        expected: f64,
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionWeightTable {
    weights: BTreeMap<String, f64>,
    default_weight: f64,
}

const ANCHORS: [(&str, f64); 3] = [(ASSESSMENT, 1.0), (PLAN, 1.0), (HPI, 0.9)];

impl Default for SectionWeightTable {
    fn default() -> Self {
        let weights = [
            (ASSESSMENT, 1.0),
            (PLAN, 1.0),
            (HPI, 0.9),
            ("CHIEF COMPLAINT", 0.8),
            ("MEDICATIONS", 0.8),
            ("LABORATORY", 0.8),
            ("PHYSICAL EXAM", 0.7),
            ("PAST MEDICAL HISTORY", 0.7),
            ("FAMILY HISTORY", 0.6),
            ("SOCIAL HISTORY", 0.5),
            (PREAMBLE, 0.5),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            weights,
            default_weight: 0.5,
        }
    }
}

fn check_weight(name: &str, weight: f64) -> Result<(), SectionError> {
    if weight > 0.0 && weight <= 1.0 {
        Ok(())
    } else {
        Err(SectionError::WeightOutOfRange {
            name: name.to_string(),
            weight,
        })
    }
}

impl SectionWeightTable {
    /// Default table with `overrides` applied. Keys are canonicalized.
    /// The ASSESSMENT, PLAN and HISTORY OF PRESENT ILLNESS anchors cannot be
    /// changed.
    pub fn with_overrides<'a>(
        overrides: impl IntoIterator<Item = (&'a str, f64)>,
        default_weight: Option<f64>,
    ) -> Result<Self, SectionError> {
        let mut table = Self::default();
        if let Some(d) = default_weight {
            check_weight("default", d)?;
            table.default_weight = d;
        }
        for (name, weight) in overrides {
            let name = canonical_heading(name);
            check_weight(&name, weight)?;
            if let Some(&(_, expected)) = ANCHORS.iter().find(|(a, _)| *a == name) {
                if weight != expected {
                    return Err(SectionError::AnchorWeight {
                        name,
                        expected,
                        weight,
                    });
                }
            }
            table.weights.insert(name, weight);
        }
        Ok(table)
    }

    pub fn default_weight(&self) -> f64 {
        self.default_weight
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Uppercase, strip a trailing colon, collapse internal whitespace.
pub fn canonical_heading(name: &str) -> String {
    let trimmed = name.trim();
    let trimmed = trimmed.strip_suffix(':').unwrap_or(trimmed);
    trimmed
        .split_whitespace()
        .map(str::to_uppercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn weight_of(name: &str, table: &SectionWeightTable) -> f64 {
    table
        .weights
        .get(&canonical_heading(name))
        .copied()
        .unwrap_or(table.default_weight)
}

/// A heading is a line made only of uppercase letters, spaces and slashes
/// (at least three letters), optionally ending in `:`.
pub fn heading_name(line: &str) -> Option<String> {
    let body = line.trim();
    let body = body.strip_suffix(':').unwrap_or(body);
    let mut letters = 0;
    for c in body.chars() {
        match c {
            'A'..='Z' => letters += 1,
            ' ' | '\t' | '/' => {}
            _ => return None,
        }
    }
    (letters >= 3).then(|| canonical_heading(body))
}

pub fn has_heading(text: &str) -> bool {
    text.lines().any(|l| heading_name(l).is_some())
}

/// Split `text` into sections tiling the word range `[0, word_count)`.
pub fn parse_sections(text: &str, table: &SectionWeightTable) -> Vec<Section> {
    parse_sections_indexed(&WordIndex::new(text), table)
}

pub fn parse_sections_indexed(words: &WordIndex<'_>, table: &SectionWeightTable) -> Vec<Section> {
    let total = words.len();
    if total == 0 {
        return Vec::new();
    }
    let mut starts: Vec<(usize, String)> = words
        .lines()
        .filter_map(|(line, first)| heading_name(line).map(|name| (first, name)))
        .collect();
    if starts.first().is_none_or(|(s, _)| *s > 0) {
        starts.insert(0, (0, PREAMBLE.to_string()));
    }
    let mut sections = Vec::with_capacity(starts.len());
    for (i, (start, name)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(total, |(s, _)| *s);
        sections.push(Section {
            weight: weight_of(name, table),
            name: name.clone(),
            start_word: *start,
            end_word: end,
        });
    }
    sections
}

pub fn section_at(sections: &[Section], word_index: usize) -> Result<&Section, SectionError> {
    let len = sections.last().map_or(0, |s| s.end_word);
    if word_index >= len {
        return Err(SectionError::OutOfRange {
            index: word_index,
            len,
        });
    }
    let i = sections.partition_point(|s| s.start_word <= word_index);
    Ok(&sections[i - 1])
}
