//! Entity-centred context retrieval.
//!
//! Every extracted entity anchors a window of `radius_words` words on each
//! side. Windows are scored against the question, then accepted greedily in
//! score order while the merged context stays within the token budget.
//! Accepted windows that overlap or nearly touch are merged into one segment.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{ClinicalNote, Question};
use crate::entities::{extract_entities_indexed, ClinicalEntity, EntityCategory, Lexicon};
use crate::metrics::cosine;
use crate::providers::{Embedder, EmbeddingVector};
use crate::retrieval::{ContextPackage, Segment, Strategy, TokenBudget};
use crate::sectionizer::{parse_sections_indexed, section_at, Section, SectionWeightTable};
use crate::text::WordIndex;

pub const FALLBACK_PROVENANCE: &str = "fallback: no entities found";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub radius_words: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub merge_gap_words: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            radius_words: 150,
            alpha: 0.5,
            beta: 0.25,
            gamma: 0.15,
            delta: 0.10,
            merge_gap_words: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WindowConfigError {
    #[error("radius_words must be at least 1")]
    ZeroRadius,
    #[error("weight `{name}` must be finite and non-negative, got {value}")]
    NegativeWeight { name: &'static str, value: f64 },
    #[error("alpha + beta + gamma must be positive")]
    DegenerateWeights,
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), WindowConfigError> {
        if self.radius_words == 0 {
            return Err(WindowConfigError::ZeroRadius);
        }
        for (name, value) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(WindowConfigError::NegativeWeight { name, value });
            }
        }
        if self.alpha + self.beta + self.gamma <= 0.0 {
            return Err(WindowConfigError::DegenerateWeights);
        }
        Ok(())
    }
}

/// The four ingredients of a window score, before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreComponents {
    pub alignment: f64,
    pub section_weight: f64,
    pub confidence: f64,
    /// 1.0 when the window holds entities of at least two categories.
    pub relationship: f64,
}

impl ScoreComponents {
    pub fn combine(&self, cfg: &WindowConfig) -> f64 {
        cfg.alpha * self.alignment
            + cfg.beta * self.section_weight
            + cfg.gamma * self.confidence
            + cfg.delta * self.relationship
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityWindow {
    pub anchor: ClinicalEntity,
    pub start_word: usize,
    pub end_word: usize,
    pub section_name: String,
    pub section_weight: f64,
    pub score: f64,
}

/// `[anchor.start - radius, anchor.end + radius)` clamped to the document.
pub fn window_span(anchor: &ClinicalEntity, radius: usize, word_count: usize) -> (usize, usize) {
    (
        anchor.start_word.saturating_sub(radius),
        (anchor.end_word + radius).min(word_count),
    )
}

/// Distinct categories of the entities lying wholly inside `[start, end)`.
/// `entities` must be sorted by start.
fn categories_within(entities: &[ClinicalEntity], start: usize, end: usize) -> BTreeSet<EntityCategory> {
    let from = entities.partition_point(|e| e.start_word < start);
    entities[from..]
        .iter()
        .take_while(|e| e.start_word < end)
        .filter(|e| e.end_word <= end)
        .map(|e| e.category)
        .collect()
}

pub fn score_components(
    window_text: &str,
    section_weight: f64,
    anchor: &ClinicalEntity,
    categories_in_window: usize,
    question: &EmbeddingVector,
    embedder: &dyn Embedder,
) -> ScoreComponents {
    ScoreComponents {
        alignment: cosine(question, &embedder.embed(window_text)).unwrap_or(0.0),
        section_weight,
        confidence: anchor.confidence,
        relationship: if categories_in_window >= 2 { 1.0 } else { 0.0 },
    }
}

/// Score of one window within its note.
pub fn score_window(
    window: &EntityWindow,
    words: &WordIndex<'_>,
    entities: &[ClinicalEntity],
    question: &Question,
    config: &WindowConfig,
    embedder: &dyn Embedder,
) -> f64 {
    let cats = categories_within(entities, window.start_word, window.end_word).len();
    score_components(
        words.slice(window.start_word, window.end_word),
        window.section_weight,
        &window.anchor,
        cats,
        &embedder.embed(&question.text),
        embedder,
    )
    .combine(config)
}

/// Build and score one window per entity. `entities` must be sorted by start.
pub fn build_windows(
    words: &WordIndex<'_>,
    sections: &[Section],
    entities: &[ClinicalEntity],
    question: &Question,
    config: &WindowConfig,
    embedder: &dyn Embedder,
) -> Vec<EntityWindow> {
    let q = embedder.embed(&question.text);
    let mut embedded: BTreeMap<(usize, usize), EmbeddingVector> = BTreeMap::new();
    entities
        .iter()
        .map(|anchor| {
            let (start, end) = window_span(anchor, config.radius_words, words.len());
            let section = section_at(sections, anchor.start_word).expect("anchor lies inside the note");
            let window_vec = embedded
                .entry((start, end))
                .or_insert_with(|| embedder.embed(words.slice(start, end)));
            let components = ScoreComponents {
                alignment: cosine(&q, window_vec).unwrap_or(0.0),
                section_weight: section.weight,
                confidence: anchor.confidence,
                relationship: if categories_within(entities, start, end).len() >= 2 {
                    1.0
                } else {
                    0.0
                },
            };
            EntityWindow {
                anchor: anchor.clone(),
                start_word: start,
                end_word: end,
                section_name: section.name.clone(),
                section_weight: section.weight,
                score: components.combine(config),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergedSpan {
    pub start_word: usize,
    pub end_word: usize,
    pub score: f64,
}

/// Union of spans, joining any two whose gap is at most `gap` words. The
/// merged score is the maximum member score. Output is sorted by start.
pub fn merge_spans(spans: &[(usize, usize, f64)], gap: usize) -> Vec<MergedSpan> {
    let mut sorted: Vec<(usize, usize, f64)> = spans.iter().copied().filter(|s| s.0 < s.1).collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<MergedSpan> = Vec::new();
    for (s, e, score) in sorted {
        match out.last_mut() {
            Some(last) if s <= last.end_word + gap => {
                last.end_word = last.end_word.max(e);
                last.score = last.score.max(score);
            }
            _ => out.push(MergedSpan {
                start_word: s,
                end_word: e,
                score,
            }),
        }
    }
    out
}

pub fn merge_windows(windows: &[EntityWindow], gap: usize) -> Vec<MergedSpan> {
    let spans: Vec<_> = windows.iter().map(|w| (w.start_word, w.end_word, w.score)).collect();
    merge_spans(&spans, gap)
}

/// Processing order for selection: score descending, then start, then
/// original position.
pub fn selection_order(windows: &[EntityWindow]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by(|&a, &b| {
        windows[b]
            .score
            .total_cmp(&windows[a].score)
            .then(windows[a].start_word.cmp(&windows[b].start_word))
            .then(a.cmp(&b))
    });
    order
}

/// Disjoint gap-merged spans with a running token total.
struct SpanSet<'w, 'a> {
    words: &'w WordIndex<'a>,
    gap: usize,
    spans: BTreeMap<usize, usize>,
    tokens: usize,
}

impl<'w, 'a> SpanSet<'w, 'a> {
    fn new(words: &'w WordIndex<'a>, gap: usize) -> Self {
        Self {
            words,
            gap,
            spans: BTreeMap::new(),
            tokens: 0,
        }
    }

    /// The span that inserting `[s, e)` would create, the existing spans it
    /// absorbs, and the resulting change in tokens.
    fn plan(&self, s: usize, e: usize) -> ((usize, usize), Vec<usize>, usize) {
        let (mut lo, mut hi) = (s, e);
        let mut absorbed = Vec::new();
        let mut removed_tokens = 0;
        for (&ss, &se) in self.spans.range(..=e + self.gap).rev() {
            if se + self.gap < s {
                break;
            }
            lo = lo.min(ss);
            hi = hi.max(se);
            absorbed.push(ss);
            removed_tokens += self.words.tokens_in(ss, se);
        }
        let added = self.words.tokens_in(lo, hi) - removed_tokens;
        ((lo, hi), absorbed, added)
    }

    fn insert(&mut self, merged: (usize, usize), absorbed: &[usize], added: usize) {
        for s in absorbed {
            self.spans.remove(s);
        }
        self.spans.insert(merged.0, merged.1);
        self.tokens += added;
    }
}

/// Greedy selection: visit windows in [`selection_order`] and accept each one
/// whose merged context still fits the budget. Returns accepted indices in
/// visiting order.
pub fn select_windows(
    windows: &[EntityWindow],
    words: &WordIndex<'_>,
    budget: TokenBudget,
    gap: usize,
) -> Vec<usize> {
    let mut set = SpanSet::new(words, gap);
    let mut accepted = Vec::new();
    for i in selection_order(windows) {
        let w = &windows[i];
        let (merged, absorbed, added) = set.plan(w.start_word, w.end_word);
        if set.tokens + added <= budget.max_context_tokens {
            set.insert(merged, &absorbed, added);
            accepted.push(i);
        }
    }
    accepted
}

#[derive(Debug, Clone)]
pub struct ClearParams<'a> {
    pub lexicon: &'a Lexicon,
    pub weights: &'a SectionWeightTable,
    pub config: WindowConfig,
    pub budget: TokenBudget,
}

pub fn retrieve_clear(
    note: &ClinicalNote,
    question: &Question,
    params: &ClearParams<'_>,
    embedder: &dyn Embedder,
) -> ContextPackage {
    let words = WordIndex::new(&note.text);
    if words.is_empty() {
        return ContextPackage::new(Strategy::Clear, Vec::new(), Vec::new());
    }
    let sections = parse_sections_indexed(&words, params.weights);
    let mut entities = extract_entities_indexed(&words, params.lexicon);
    entities.sort_by_key(|e| (e.start_word, e.end_word));
    if entities.is_empty() {
        return fallback(&words, &sections, params.budget);
    }

    let windows = build_windows(&words, &sections, &entities, question, &params.config, embedder);
    let accepted = select_windows(&windows, &words, params.budget, params.config.merge_gap_words);
    let chosen: Vec<EntityWindow> = accepted.iter().map(|&i| windows[i].clone()).collect();
    let provenance = chosen
        .iter()
        .map(|w| {
            format!(
                "anchor {:?} {:?} [{}, {}) in {} score {:.4}",
                w.anchor.surface, w.anchor.category, w.start_word, w.end_word, w.section_name, w.score
            )
        })
        .collect();
    let segments = merge_windows(&chosen, params.config.merge_gap_words)
        .into_iter()
        .map(|m| Segment {
            text: words.slice(m.start_word, m.end_word).to_string(),
            start_word: m.start_word,
            end_word: m.end_word,
            score: m.score,
        })
        .collect();
    ContextPackage::new(Strategy::Clear, segments, provenance)
}

/// Highest-weight section (earliest on ties), cut at the budget.
fn fallback(words: &WordIndex<'_>, sections: &[Section], budget: TokenBudget) -> ContextPackage {
    let best = sections
        .iter()
        .reduce(|best, s| if s.weight > best.weight { s } else { best })
        .expect("non-empty note has a section");
    let mut end = best.start_word;
    while end < best.end_word && words.tokens_in(best.start_word, end + 1) <= budget.max_context_tokens {
        end += 1;
    }
    let segments = if end > best.start_word {
        vec![Segment {
            text: words.slice(best.start_word, end).to_string(),
            start_word: best.start_word,
            end_word: end,
            score: best.weight,
        }]
    } else {
        Vec::new()
    };
    ContextPackage::new(
        Strategy::Clear,
        segments,
        vec![format!("{FALLBACK_PROVENANCE}; using section {}", best.name)],
    )
}
