//! Answer-quality and efficiency metrics, and win-rate aggregation.

mod meteor;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use meteor::{align, count_chunks, meteor, meteor_from_counts, meteor_words, Alignment, MeteorParams};

use crate::corpus::{NoteSize, SizeClass};
use crate::providers::{Embedder, EmbeddingVector};
use crate::retrieval::Strategy;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("wide-context token count must be positive, got {0}")]
    NonPositiveWideTokens(f64),
    #[error("case {case} has no {missing} result")]
    IncompleteCase { case: CaseKey, missing: Strategy },
    #[error("case {case} has more than one {strategy} result")]
    DuplicateResult { case: CaseKey, strategy: Strategy },
    #[error("no size information for note `{0}`")]
    UnknownNote(String),
}

/// Cosine similarity; 0.0 when either side is the zero vector.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MetricError> {
    if a.dimension() != b.dimension() {
        return Err(MetricError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Cosine similarity of two texts under `embedder`.
pub fn semantic_similarity(embedder: &dyn Embedder, answer: &str, gold: &str) -> f64 {
    cosine(&embedder.embed(answer), &embedder.embed(gold)).expect("one embedder, one dimension")
}

/// Fraction of wide-context tokens saved: `1 - strategy / wide`.
pub fn token_savings(strategy_tokens: f64, wide_tokens: f64) -> Result<f64, MetricError> {
    if wide_tokens <= 0.0 || wide_tokens.is_nan() {
        return Err(MetricError::NonPositiveWideTokens(wide_tokens));
    }
    Ok(1.0 - strategy_tokens / wide_tokens)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub note_id: String,
    pub question_id: String,
    pub strategy: Strategy,
    pub model_id: String,
    #[serde(default)]
    pub answer: String,
    pub semantic_similarity: f64,
    /// Absent for replayed results that only publish similarity.
    #[serde(default)]
    pub meteor: Option<f64>,
    pub total_tokens: usize,
    pub context_tokens: usize,
}

impl EvalResult {
    pub fn case_key(&self) -> CaseKey {
        CaseKey {
            note_id: self.note_id.clone(),
            question_id: self.question_id.clone(),
            model_id: self.model_id.clone(),
        }
    }
}

/// One comparison case: every strategy answers the same (note, question)
/// with the same model.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CaseKey {
    pub note_id: String,
    pub question_id: String,
    pub model_id: String,
}

impl fmt::Display for CaseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.note_id, self.question_id, self.model_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub wins: usize,
    pub win_rate: f64,
    pub mean_similarity: f64,
    pub mean_meteor: Option<f64>,
    pub mean_tokens: f64,
    /// Absent when no Wide results are present.
    pub token_savings_vs_wide: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case: CaseKey,
    pub winner: Strategy,
    pub results: BTreeMap<Strategy, CaseResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub similarity: f64,
    pub total_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WinTable {
    pub cases: usize,
    pub rows: Vec<StrategyRow>,
    pub outcomes: Vec<CaseOutcome>,
}

impl WinTable {
    pub fn row(&self, strategy: Strategy) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    pub fn wins(&self, strategy: Strategy) -> usize {
        self.row(strategy).map_or(0, |r| r.wins)
    }

    /// Strategies sorted by mean similarity, best first (ties by preference).
    pub fn ranking_by_similarity(&self) -> Vec<Strategy> {
        let mut rows: Vec<&StrategyRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            b.mean_similarity
                .total_cmp(&a.mean_similarity)
                .then(b.strategy.preference().cmp(&a.strategy.preference()))
        });
        rows.into_iter().map(|r| r.strategy).collect()
    }
}

/// Per-case winner: highest similarity, then fewer total tokens, then
/// CLEAR > RAG > Wide.
pub fn pick_winner<'a, I>(candidates: I) -> Option<Strategy>
where
    I: IntoIterator<Item = (Strategy, f64, f64)> + 'a,
{
    candidates
        .into_iter()
        .max_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then(b.2.total_cmp(&a.2))
                .then(a.0.preference().cmp(&b.0.preference()))
        })
        .map(|(s, _, _)| s)
}

/// One case and its result per strategy.
pub type CaseGroup<'a> = (CaseKey, BTreeMap<Strategy, &'a EvalResult>);

/// Group results into cases, in first-appearance order.
pub fn group_cases(results: &[EvalResult]) -> Result<(Vec<Strategy>, Vec<CaseGroup<'_>>), MetricError> {
    let strategies: BTreeSet<Strategy> = results.iter().map(|r| r.strategy).collect();
    let mut order: Vec<CaseKey> = Vec::new();
    let mut groups: HashMap<CaseKey, BTreeMap<Strategy, &EvalResult>> = HashMap::new();
    for r in results {
        let key = r.case_key();
        let group = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            BTreeMap::new()
        });
        if group.insert(r.strategy, r).is_some() {
            return Err(MetricError::DuplicateResult {
                case: key,
                strategy: r.strategy,
            });
        }
    }
    let mut cases = Vec::with_capacity(order.len());
    for key in order {
        let group = groups.remove(&key).expect("grouped");
        if let Some(&missing) = strategies.iter().find(|s| !group.contains_key(s)) {
            return Err(MetricError::IncompleteCase { case: key, missing });
        }
        cases.push((key, group));
    }
    Ok((strategies.into_iter().collect(), cases))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn win_table(results: &[EvalResult]) -> Result<WinTable, MetricError> {
    let (strategies, cases) = group_cases(results)?;
    let mut wins: BTreeMap<Strategy, usize> = strategies.iter().map(|&s| (s, 0)).collect();
    let mut outcomes = Vec::with_capacity(cases.len());
    for (case, group) in &cases {
        let winner = pick_winner(
            group
                .iter()
                .map(|(&s, r)| (s, r.semantic_similarity, r.total_tokens as f64)),
        )
        .expect("non-empty case");
        *wins.get_mut(&winner).expect("known strategy") += 1;
        outcomes.push(CaseOutcome {
            case: case.clone(),
            winner,
            results: group
                .iter()
                .map(|(&s, r)| {
                    (
                        s,
                        CaseResult {
                            similarity: r.semantic_similarity,
                            total_tokens: r.total_tokens,
                        },
                    )
                })
                .collect(),
        });
    }

    let n = cases.len();
    let mean_tokens_of = |s: Strategy| mean(cases.iter().map(|(_, g)| g[&s].total_tokens as f64));
    let wide_mean = strategies
        .contains(&Strategy::Wide)
        .then(|| mean_tokens_of(Strategy::Wide));

    let rows = strategies
        .iter()
        .map(|&s| {
            let mean_tokens = mean_tokens_of(s);
            let meteors: Vec<f64> = cases.iter().filter_map(|(_, g)| g[&s].meteor).collect();
            StrategyRow {
                strategy: s,
                wins: wins[&s],
                win_rate: if n == 0 { 0.0 } else { wins[&s] as f64 / n as f64 },
                mean_similarity: mean(cases.iter().map(|(_, g)| g[&s].semantic_similarity)),
                mean_meteor: (meteors.len() == n && n > 0).then(|| mean(meteors.iter().copied())),
                mean_tokens,
                token_savings_vs_wide: wide_mean.and_then(|w| token_savings(mean_tokens, w).ok()),
            }
        })
        .collect();

    Ok(WinTable {
        cases: n,
        rows,
        outcomes,
    })
}

/// Win tables restricted to each size class. Every class is present, possibly
/// with zero cases.
pub fn bucket_analysis(
    results: &[EvalResult],
    sizes: &BTreeMap<String, NoteSize>,
) -> Result<BTreeMap<SizeClass, WinTable>, MetricError> {
    // Validate completeness on the whole set first so errors name the case.
    group_cases(results)?;
    let mut out = BTreeMap::new();
    for class in SizeClass::ALL {
        let mut subset = Vec::new();
        for r in results {
            let size = sizes
                .get(&r.note_id)
                .ok_or_else(|| MetricError::UnknownNote(r.note_id.clone()))?;
            if size.class == class {
                subset.push(r.clone());
            }
        }
        out.insert(class, win_table(&subset)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn result(note: &str, s: Strategy, sim: f64, tokens: usize) -> EvalResult {
        EvalResult {
            note_id: note.into(),
            question_id: "q".into(),
            strategy: s,
            model_id: "m".into(),
            answer: String::new(),
            semantic_similarity: sim,
            meteor: None,
            total_tokens: tokens,
            context_tokens: tokens,
        }
    }

    #[test]
    fn cosine_basics() {
        let v = EmbeddingVector::raw(vec![3.0, 4.0]);
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        let x = EmbeddingVector::raw(vec![1.0, 0.0]);
        let y = EmbeddingVector::raw(vec![0.0, 1.0]);
        assert_eq!(cosine(&x, &y).unwrap(), 0.0);
        let z = EmbeddingVector::raw(vec![0.0, 0.0]);
        assert_eq!(cosine(&x, &z).unwrap(), 0.0);
        assert_eq!(
            cosine(&x, &EmbeddingVector::raw(vec![1.0])),
            Err(MetricError::DimensionMismatch(2, 1))
        );
    }

    #[test]
    fn cosine_matches_naive_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for i in 0..32 {
                dot += a[i] * b[i];
                na += a[i] * a[i];
                nb += b[i] * b[i];
            }
            let oracle = dot / (na.sqrt() * nb.sqrt());
            let got = cosine(&EmbeddingVector::raw(a), &EmbeddingVector::raw(b)).unwrap();
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn savings() {
        assert!((token_savings(8_456.0, 39_173.0).unwrap() - 0.784).abs() < 0.0005);
        assert!((token_savings(544.0, 39_173.0).unwrap() - 0.986).abs() < 0.0005);
        assert_eq!(token_savings(10.0, 10.0).unwrap(), 0.0);
        assert!(token_savings(1.0, 0.0).is_err());
        assert!(token_savings(1.0, -3.0).is_err());
    }

    #[test]
    fn tie_breaks() {
        // Equal similarity: fewer tokens wins.
        let rs = vec![
            result("n", Strategy::Wide, 0.8, 1000),
            result("n", Strategy::Rag, 0.8, 500),
            result("n", Strategy::Clear, 0.8, 300),
        ];
        assert_eq!(win_table(&rs).unwrap().wins(Strategy::Clear), 1);
        // Equal similarity and tokens: CLEAR > RAG > Wide.
        let rs = vec![
            result("n", Strategy::Wide, 0.8, 10),
            result("n", Strategy::Rag, 0.8, 10),
        ];
        assert_eq!(win_table(&rs).unwrap().wins(Strategy::Rag), 1);
    }

    #[test]
    fn incomplete_and_duplicate_cases() {
        let rs = vec![
            result("n1", Strategy::Wide, 0.8, 10),
            result("n1", Strategy::Clear, 0.9, 10),
            result("n2", Strategy::Wide, 0.8, 10),
        ];
        let err = win_table(&rs).unwrap_err();
        assert_eq!(err.to_string(), "case (n2, q, m) has no CLEAR result");
        let rs = vec![result("n1", Strategy::Wide, 0.8, 10), result("n1", Strategy::Wide, 0.7, 10)];
        assert!(matches!(win_table(&rs), Err(MetricError::DuplicateResult { .. })));
    }

    #[test]
    fn empty_results_give_empty_table() {
        let t = win_table(&[]).unwrap();
        assert_eq!(t.cases, 0);
        assert!(t.rows.is_empty());
    }

    #[test]
    fn aggregates() {
        let rs = vec![
            result("n1", Strategy::Wide, 0.8, 1000),
            result("n1", Strategy::Clear, 0.9, 200),
            result("n2", Strategy::Wide, 0.95, 3000),
            result("n2", Strategy::Clear, 0.7, 400),
        ];
        let t = win_table(&rs).unwrap();
        assert_eq!(t.cases, 2);
        let clear = t.row(Strategy::Clear).unwrap();
        assert_eq!(clear.wins, 1);
        assert!((clear.win_rate - 0.5).abs() < 1e-12);
        assert!((clear.mean_similarity - 0.8).abs() < 1e-12);
        assert!((clear.mean_tokens - 300.0).abs() < 1e-12);
        assert!((clear.token_savings_vs_wide.unwrap() - 0.85).abs() < 1e-12);
        assert_eq!(t.row(Strategy::Wide).unwrap().token_savings_vs_wide, Some(0.0));
        assert_eq!(t.ranking_by_similarity(), vec![Strategy::Wide, Strategy::Clear]);
    }
}
