//! Exact-match METEOR.
//!
//! Unigrams are aligned one-to-one so that the number of matches is maximal
//! and, among maximal alignments, the number of chunks (runs contiguous in
//! both strings) is minimal. Minimizing chunks is a common-string-partition
//! problem, so the exact search is memoized and bounded; inputs whose search
//! space exceeds the bound fall back to a longest-run-first greedy alignment,
//! which still attains the maximal match count.

use std::collections::HashMap;

use crate::text::alnum_words;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// (candidate index, reference index), sorted by candidate index.
    pub pairs: Vec<(usize, usize)>,
    pub chunks: usize,
    /// Whether the chunk count is proven minimal.
    pub exact: bool,
}

impl Alignment {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }
}

/// Runs of pairs adjacent in both candidate and reference.
pub fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

fn intern<'a>(ids: &mut HashMap<&'a str, usize>, w: &'a str) -> usize {
    let n = ids.len();
    *ids.entry(w).or_insert(n)
}

const EXACT_STATE_LIMIT: usize = 50_000;

pub fn align<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Alignment {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let cand: Vec<usize> = candidate.iter().map(|w| intern(&mut ids, w.as_ref())).collect();
    let refr: Vec<usize> = reference.iter().map(|w| intern(&mut ids, w.as_ref())).collect();
    let types = ids.len();

    if cand == refr {
        let pairs: Vec<(usize, usize)> = (0..cand.len()).map(|i| (i, i)).collect();
        return Alignment {
            chunks: count_chunks(&pairs),
            pairs,
            exact: true,
        };
    }
    if refr.len() <= 128 {
        if let Some(a) = ExactSearch::new(&cand, &refr, types).run() {
            return a;
        }
    }
    greedy_align(&cand, &refr)
}

struct ExactSearch<'a> {
    cand: &'a [usize],
    type_mask: Vec<u128>,
    excess: Vec<usize>,
    // seen_before[i] = occurrences of cand[i]'s type in cand[..i]
    seen_before: Vec<usize>,
    ref_positions: Vec<Vec<usize>>,
    memo: HashMap<(u16, u128, u8), (u32, Choice)>,
    aborted: bool,
}

#[derive(Debug, Clone, Copy)]
enum Choice {
    End,
    Skip,
    Match(u8),
}

const NO_PREV: u8 = u8::MAX;

impl<'a> ExactSearch<'a> {
    fn new(cand: &'a [usize], refr: &'a [usize], types: usize) -> Self {
        let mut type_mask = vec![0u128; types];
        let mut ref_positions = vec![Vec::new(); types];
        let mut ref_count = vec![0usize; types];
        for (j, &t) in refr.iter().enumerate() {
            type_mask[t] |= 1u128 << j;
            ref_positions[t].push(j);
            ref_count[t] += 1;
        }
        let mut cand_count = vec![0usize; types];
        let mut seen_before = Vec::with_capacity(cand.len());
        for &t in cand {
            seen_before.push(cand_count[t]);
            cand_count[t] += 1;
        }
        let excess = (0..types)
            .map(|t| cand_count[t].saturating_sub(ref_count[t]))
            .collect();
        Self {
            cand,
            type_mask,
            excess,
            seen_before,
            ref_positions,
            memo: HashMap::new(),
            aborted: false,
        }
    }

    fn run(mut self) -> Option<Alignment> {
        if self.cand.len() >= u16::MAX as usize {
            return None;
        }
        self.solve(0, 0, NO_PREV);
        if self.aborted {
            return None;
        }
        let mut pairs = Vec::new();
        let (mut i, mut mask, mut prev) = (0usize, 0u128, NO_PREV);
        loop {
            let (_, choice) = self.memo[&(i as u16, mask, prev)];
            match choice {
                Choice::End => break,
                Choice::Skip => prev = NO_PREV,
                Choice::Match(j) => {
                    pairs.push((i, j as usize));
                    mask |= 1u128 << j;
                    prev = j;
                }
            }
            i += 1;
        }
        let chunks = count_chunks(&pairs);
        Some(Alignment {
            pairs,
            chunks,
            exact: true,
        })
    }

    fn solve(&mut self, i: usize, mask: u128, prev: u8) -> u32 {
        if self.aborted {
            return 0;
        }
        if i == self.cand.len() {
            self.memo.insert((i as u16, mask, prev), (0, Choice::End));
            return 0;
        }
        let key = (i as u16, mask, prev);
        if let Some(&(cost, _)) = self.memo.get(&key) {
            return cost;
        }
        if self.memo.len() >= EXACT_STATE_LIMIT {
            self.aborted = true;
            return 0;
        }
        let t = self.cand[i];
        let matched = (mask & self.type_mask[t]).count_ones() as usize;
        let skipped = self.seen_before[i] - matched;

        let mut best = (u32::MAX, Choice::End);
        if skipped < self.excess[t] {
            let cost = self.solve(i + 1, mask, NO_PREV);
            best = (cost, Choice::Skip);
        }
        for k in 0..self.ref_positions[t].len() {
            let j = self.ref_positions[t][k];
            if mask & (1u128 << j) != 0 {
                continue;
            }
            let step = u32::from(!(prev != NO_PREV && j > 0 && prev as usize == j - 1));
            let cost = step + self.solve(i + 1, mask | (1u128 << j), j as u8);
            if cost < best.0 {
                best = (cost, Choice::Match(j as u8));
            }
        }
        if self.aborted {
            return 0;
        }
        debug_assert!(best.0 != u32::MAX, "every state has a feasible continuation");
        self.memo.insert(key, best);
        best.0
    }
}

/// Repeatedly align the longest run common to both strings among unaligned
/// positions (ties: earliest candidate, then earliest reference position).
fn greedy_align(cand: &[usize], refr: &[usize]) -> Alignment {
    let (n, m) = (cand.len(), refr.len());
    let mut cand_used = vec![false; n];
    let mut ref_used = vec![false; m];
    let mut pairs = Vec::new();
    let mut run = vec![0u32; (n + 1) * (m + 1)];
    loop {
        let mut best = (0u32, 0usize, 0usize);
        for i in 1..=n {
            for j in 1..=m {
                let v = if !cand_used[i - 1] && !ref_used[j - 1] && cand[i - 1] == refr[j - 1] {
                    run[(i - 1) * (m + 1) + (j - 1)] + 1
                } else {
                    0
                };
                run[i * (m + 1) + j] = v;
                if v > 0 {
                    let (si, sj) = (i - v as usize, j - v as usize);
                    if v > best.0 || (v == best.0 && (si, sj) < (best.1, best.2)) {
                        best = (v, si, sj);
                    }
                }
            }
        }
        if best.0 == 0 {
            break;
        }
        for k in 0..best.0 as usize {
            cand_used[best.1 + k] = true;
            ref_used[best.2 + k] = true;
            pairs.push((best.1 + k, best.2 + k));
        }
    }
    pairs.sort_unstable();
    let chunks = count_chunks(&pairs);
    Alignment {
        pairs,
        chunks,
        exact: false,
    }
}

/// Score from alignment statistics.
pub fn meteor_from_counts(
    matches: usize,
    chunks: usize,
    candidate_len: usize,
    reference_len: usize,
    params: MeteorParams,
) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let precision = m / candidate_len as f64;
    let recall = m / reference_len as f64;
    let f_mean = precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
    let penalty = params.gamma * (chunks as f64 / m).powf(params.beta);
    f_mean * (1.0 - penalty)
}

pub fn meteor_words<S: AsRef<str>>(candidate: &[S], reference: &[S], params: MeteorParams) -> f64 {
    let a = align(candidate, reference);
    meteor_from_counts(a.matches(), a.chunks, candidate.len(), reference.len(), params)
}

/// METEOR over lowercased alphanumeric words with default parameters.
pub fn meteor(candidate: &str, reference: &str) -> f64 {
    let c: Vec<String> = alnum_words(candidate).collect();
    let r: Vec<String> = alnum_words(reference).collect();
    meteor_words(&c, &r, MeteorParams::default())
}
