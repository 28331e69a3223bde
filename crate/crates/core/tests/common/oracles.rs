//! Brute-force reference implementations used to cross-check the engine.
#![allow(dead_code)]

use std::collections::BTreeSet;

use clearbench_core::corpus::ClinicalNote;
use clearbench_core::entities::{ClinicalEntity, EntityCategory, Lexicon};
use clearbench_core::providers::{Embedder, EmbeddingVector, HashingEmbedder};
use clearbench_core::sectionizer::Section;
use clearbench_core::text::count_tokens;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn naive_cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    let na: f64 = a.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

// ---------------------------------------------------------------- CLEAR

pub struct OracleWindow {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

pub struct WindowWeights {
    pub radius: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

/// Windows scored from scratch, one per entity, in entity order.
pub fn oracle_windows(
    text: &str,
    entities: &[ClinicalEntity],
    sections: &[Section],
    question: &str,
    w: &WindowWeights,
    embedder: &HashingEmbedder,
) -> Vec<OracleWindow> {
    let ws = words(text);
    let q = embedder.embed(question);
    entities
        .iter()
        .map(|e| {
            let start = e.start_word.saturating_sub(w.radius);
            let end = (e.end_word + w.radius).min(ws.len());
            let section = sections
                .iter()
                .find(|s| s.start_word <= e.start_word && e.start_word < s.end_word)
                .expect("anchor in a section");
            let cats: BTreeSet<EntityCategory> = entities
                .iter()
                .filter(|o| o.start_word >= start && o.end_word <= end)
                .map(|o| o.category)
                .collect();
            let window_text = ws[start..end].join(" ");
            let cos = naive_cosine(&q, &embedder.embed(&window_text));
            let rel = if cats.len() >= 2 { 1.0 } else { 0.0 };
            OracleWindow {
                start,
                end,
                score: w.alpha * cos + w.beta * section.weight + w.gamma * e.confidence + w.delta * rel,
            }
        })
        .collect()
}

/// Covered-word mask of `spans`, with uncovered runs of at most `gap` words
/// between covered words filled in.
pub fn cover(n: usize, spans: &[(usize, usize)], gap: usize) -> Vec<bool> {
    let mut c = vec![false; n];
    for &(s, e) in spans {
        c[s..e].iter_mut().for_each(|x| *x = true);
    }
    let mut i = 0;
    let mut seen_cover = false;
    while i < n {
        if c[i] {
            seen_cover = true;
            i += 1;
            continue;
        }
        let j = (i..n).find(|&j| c[j]).unwrap_or(n);
        if seen_cover && j < n && j - i <= gap {
            c[i..j].iter_mut().for_each(|x| *x = true);
        }
        i = j;
    }
    c
}

/// Maximal runs of `true`.
pub fn runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if mask[i] {
            let j = (i..mask.len()).find(|&j| !mask[j]).unwrap_or(mask.len());
            out.push((i, j));
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

pub fn mask_tokens(ws: &[&str], mask: &[bool]) -> usize {
    ws.iter().zip(mask).filter(|(_, &m)| m).map(|(w, _)| count_tokens(w)).sum()
}

/// Visiting order: score descending, then start, then index.
pub fn oracle_order(windows: &[OracleWindow]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..windows.len()).collect();
    // Insertion sort keeps this independent of the library comparator.
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && before(&windows[idx[j]], idx[j], &windows[idx[j - 1]], idx[j - 1]) {
            idx.swap(j, j - 1);
            j -= 1;
        }
    }
    idx
}

fn before(a: &OracleWindow, ai: usize, b: &OracleWindow, bi: usize) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    if a.start != b.start {
        return a.start < b.start;
    }
    ai < bi
}

/// Among all subsets whose gap-merged context fits `budget`, the one that is
/// lexicographically greatest in visiting order (prefer earlier windows).
/// Returns the merged spans of that subset.
pub fn oracle_selection(
    text: &str,
    windows: &[OracleWindow],
    budget: usize,
    gap: usize,
) -> Vec<(usize, usize)> {
    let ws = words(text);
    let order = oracle_order(windows);
    let n = order.len();
    assert!(n <= 16, "enumeration is exponential");
    let mut best: Option<u32> = None;
    for mask in 0u32..(1 << n) {
        // bit n-1-p set <=> order[p] chosen, so numeric order is lexicographic
        let spans: Vec<(usize, usize)> = (0..n)
            .filter(|p| mask & (1 << (n - 1 - p)) != 0)
            .map(|p| (windows[order[p]].start, windows[order[p]].end))
            .collect();
        let m = cover(ws.len(), &spans, gap);
        if mask_tokens(&ws, &m) <= budget && best.is_none_or(|b| mask > b) {
            best = Some(mask);
        }
    }
    let mask = best.unwrap_or(0);
    let spans: Vec<(usize, usize)> = (0..n)
        .filter(|p| mask & (1 << (n - 1 - p)) != 0)
        .map(|p| (windows[order[p]].start, windows[order[p]].end))
        .collect();
    runs(&cover(ws.len(), &spans, gap))
}

/// A random note of at most `max_words` words carrying at most
/// `max_terms` lexicon terms, and a question mentioning some of them.
pub fn toy_note(seed: u64, max_words: usize, max_terms: usize) -> (ClinicalNote, String) {
    const FILLER: [&str; 16] = [
        "zorb", "quil", "mave", "tesk", "pondo", "ruvel", "kast", "lomber", "fipp", "gantry", "wex", "brindle",
        "sollo", "yarrin", "dupe", "ocher",
    ];
    const HEADINGS: [&str; 6] = ["HPI:", "ASSESSMENT:", "PLAN:", "MEDICATIONS:", "SOCIAL HISTORY:", "LABORATORY:"];
    const TERMS: [&str; 12] = [
        "anemia", "fatigue", "furosemide", "hemoglobin", "ferritin", "dyspnea", "lisinopril", "echocardiogram",
        "orthopnea", "heart", "edema", "pallor",
    ];
    let lex = Lexicon::builtin();
    let known: Vec<&str> = TERMS
        .iter()
        .copied()
        .filter(|t| {
            [
                EntityCategory::Medication,
                EntityCategory::Symptom,
                EntityCategory::Disease,
                EntityCategory::LabValue,
                EntityCategory::Procedure,
                EntityCategory::Anatomy,
            ]
            .iter()
            .any(|&c| lex.terms(c).iter().any(|x| x == t))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_words = rng.gen_range(20..=max_words);
    let mut ws: Vec<String> = (0..n_words)
        .map(|_| FILLER.choose(&mut rng).unwrap().to_string())
        .collect();
    let n_terms = rng.gen_range(0..=max_terms.min(n_words / 2));
    let mut used = Vec::new();
    for _ in 0..n_terms {
        let t = known.choose(&mut rng).unwrap();
        let at = rng.gen_range(0..ws.len());
        ws[at] = t.to_string();
        used.push(*t);
    }
    let mut lines: Vec<String> = Vec::new();
    let mut i = 0;
    while i < ws.len() {
        let len = rng.gen_range(5..=30).min(ws.len() - i);
        if rng.gen_bool(0.3) {
            lines.push(HEADINGS.choose(&mut rng).unwrap().to_string());
        }
        lines.push(ws[i..i + len].join(" "));
        i += len;
    }
    let mut question = String::from("Was there");
    for t in used.iter().take(2) {
        question.push(' ');
        question.push_str(t);
    }
    question.push_str(" documented kast?");
    (ClinicalNote::new(format!("toy{seed}"), lines.join("\n")), question)
}

// ---------------------------------------------------------------- RAG

pub fn oracle_chunks(n: usize, size: usize, overlap: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        out.push((start, (start + size).min(n)));
        start += size - overlap;
    }
    out
}

/// Exhaustive ranking of chunk texts by cosine to `query`, best first,
/// earlier chunk on ties.
pub fn oracle_rank(texts: &[String], query: &str, embedder: &HashingEmbedder) -> Vec<(usize, f64)> {
    let q = embedder.embed(query);
    let scored: Vec<(usize, f64)> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| (i, naive_cosine(&q, &embedder.embed(t))))
        .collect();
    let mut out = Vec::new();
    let mut left = scored;
    while !left.is_empty() {
        let mut best = 0;
        for j in 1..left.len() {
            if left[j].1 > left[best].1 {
                best = j;
            }
        }
        out.push(left.remove(best));
    }
    out
}

// ---------------------------------------------------------------- METEOR

/// (maximal matches, minimal chunks) over every one-to-one exact alignment.
pub fn oracle_alignment(cand: &[&str], refr: &[&str]) -> (usize, usize) {
    fn go(
        i: usize,
        cand: &[&str],
        refr: &[&str],
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize)>,
        best: &mut (usize, usize),
    ) {
        if i == cand.len() {
            let m = pairs.len();
            let mut chunks = 0;
            for (k, p) in pairs.iter().enumerate() {
                if k == 0 || !(p.0 == pairs[k - 1].0 + 1 && p.1 == pairs[k - 1].1 + 1) {
                    chunks += 1;
                }
            }
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        for j in 0..refr.len() {
            if !used[j] && refr[j] == cand[i] {
                used[j] = true;
                pairs.push((i, j));
                go(i + 1, cand, refr, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
        go(i + 1, cand, refr, used, pairs, best);
    }
    let mut best = (0, usize::MAX);
    go(0, cand, refr, &mut vec![false; refr.len()], &mut Vec::new(), &mut best);
    if best.0 == 0 {
        (0, 0)
    } else {
        best
    }
}

/// Every sequence over `alphabet` with length at most `max_len`.
pub fn all_sequences(alphabet: &[&'static str], max_len: usize) -> Vec<Vec<&'static str>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &a in alphabet {
                let mut t: Vec<&str> = s.clone();
                t.push(a);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Every multiset over `alphabet` with size at most `max_len`, as a sorted
/// sequence.
pub fn all_multisets(alphabet: &[&'static str], max_len: usize) -> Vec<Vec<&'static str>> {
    all_sequences(alphabet, max_len)
        .into_iter()
        .filter(|s| s.windows(2).all(|w| w[0] <= w[1]))
        .collect()
}

pub fn oracle_meteor(matches: usize, chunks: usize, c_len: usize, r_len: usize) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / c_len as f64;
    let r = m / r_len as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    f * (1.0 - 0.5 * (chunks as f64 / m).powi(3))
}
