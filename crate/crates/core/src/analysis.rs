//! Efficiency-bonus sweeps and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{NoteSize, SizeClass};
use crate::metrics::{bucket_analysis, group_cases, pick_winner, win_table, CaseKey, EvalResult, MetricError, WinTable};
use crate::retrieval::Strategy;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("bonus must lie in [0, 1], got {0}")]
    BonusOutOfRange(f64),
    #[error("wide-context tokens must be positive, got {0}")]
    NonPositiveWide(f64),
    #[error("bonus grid must be non-empty and strictly increasing")]
    BadGrid,
    #[error("invalid grid spec `{0}` (expected start:end:step)")]
    GridSpec(String),
    #[error("a sweep needs Wide results as the token reference")]
    NoWideReference,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// `(1 - bonus) * sim + bonus * (1 - tokens / wide_tokens)`.
pub fn adjusted_score(sim: f64, tokens: f64, wide_tokens: f64, bonus: f64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&bonus) {
        return Err(AnalysisError::BonusOutOfRange(bonus));
    }
    if wide_tokens <= 0.0 || wide_tokens.is_nan() {
        return Err(AnalysisError::NonPositiveWide(wide_tokens));
    }
    Ok((1.0 - bonus) * sim + bonus * (1.0 - tokens / wide_tokens))
}

/// Parse `start:end:step` into an inclusive grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, AnalysisError> {
    let bad = || AnalysisError::GridSpec(spec.to_string());
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if step.is_nan() || step <= 0.0 || end < start || !start.is_finite() || !end.is_finite() {
        return Err(bad());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    // Round to kill accumulated binary error (0.1 + 0.2 style).
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

pub fn default_grid() -> Vec<f64> {
    parse_grid("0:0.2:0.01").expect("valid default grid")
}

/// How the token reference is taken when scoring a bonus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusMode {
    /// Each result is scored against its own case's Wide tokens; strategies
    /// are ranked by the mean adjusted score.
    #[default]
    PerNote,
    /// Mean similarity and mean tokens are scored against the mean Wide
    /// tokens.
    CorpusMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub bonus: f64,
    pub mean_adjusted: BTreeMap<Strategy, f64>,
    pub winner: Strategy,
    pub case_winners: Vec<(CaseKey, Strategy)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    /// Leader at the first grid point.
    pub leader: Strategy,
    pub challenger: Strategy,
    /// Smallest grid bonus at which `leader` no longer strictly leads.
    pub bonus: f64,
    /// Where the two adjusted means are exactly equal.
    pub exact_bonus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub mode: BonusMode,
    pub grid: Vec<f64>,
    pub points: Vec<SweepPoint>,
    pub crossovers: Vec<Crossover>,
}

impl SweepResult {
    pub fn point(&self, bonus: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| (p.bonus - bonus).abs() < 1e-12)
    }

    /// Strategies ranked by mean adjusted score at one grid point.
    pub fn ranking_at(&self, index: usize) -> Vec<Strategy> {
        rank(&self.points[index].mean_adjusted)
    }
}

fn rank(means: &BTreeMap<Strategy, f64>) -> Vec<Strategy> {
    let mut v: Vec<(Strategy, f64)> = means.iter().map(|(&s, &m)| (s, m)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.preference().cmp(&a.0.preference())));
    v.into_iter().map(|(s, _)| s).collect()
}

/// Adjusted means for every strategy at `bonus`.
fn means_at(
    cases: &[(CaseKey, BTreeMap<Strategy, &EvalResult>)],
    strategies: &[Strategy],
    bonus: f64,
    mode: BonusMode,
) -> Result<BTreeMap<Strategy, f64>, AnalysisError> {
    let n = cases.len() as f64;
    let mut out = BTreeMap::new();
    match mode {
        BonusMode::PerNote => {
            for &s in strategies {
                let mut sum = 0.0;
                for (_, g) in cases {
                    let r = g[&s];
                    let wide = g[&Strategy::Wide].total_tokens as f64;
                    sum += adjusted_score(r.semantic_similarity, r.total_tokens as f64, wide, bonus)?;
                }
                out.insert(s, sum / n);
            }
        }
        BonusMode::CorpusMean => {
            let wide = cases.iter().map(|(_, g)| g[&Strategy::Wide].total_tokens as f64).sum::<f64>() / n;
            for &s in strategies {
                let sim = cases.iter().map(|(_, g)| g[&s].semantic_similarity).sum::<f64>() / n;
                let tok = cases.iter().map(|(_, g)| g[&s].total_tokens as f64).sum::<f64>() / n;
                out.insert(s, adjusted_score(sim, tok, wide, bonus)?);
            }
        }
    }
    Ok(out)
}

pub fn sweep(results: &[EvalResult], grid: &[f64], mode: BonusMode) -> Result<SweepResult, AnalysisError> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::BadGrid);
    }
    if let Some(&b) = grid.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(AnalysisError::BonusOutOfRange(b));
    }
    let (strategies, cases) = group_cases(results)?;
    if !cases.is_empty() && !strategies.contains(&Strategy::Wide) {
        return Err(AnalysisError::NoWideReference);
    }

    let mut points = Vec::with_capacity(grid.len());
    for &bonus in grid {
        let mean_adjusted = if cases.is_empty() {
            BTreeMap::new()
        } else {
            means_at(&cases, &strategies, bonus, mode)?
        };
        let winner = rank(&mean_adjusted).first().copied().unwrap_or(Strategy::Clear);
        let mut case_winners = Vec::with_capacity(cases.len());
        for (key, g) in &cases {
            let wide = g[&Strategy::Wide].total_tokens as f64;
            let mut scored = Vec::new();
            for (&s, r) in g {
                let adj = adjusted_score(r.semantic_similarity, r.total_tokens as f64, wide, bonus)?;
                scored.push((s, adj, r.total_tokens as f64));
            }
            case_winners.push((key.clone(), pick_winner(scored).expect("non-empty case")));
        }
        points.push(SweepPoint {
            bonus,
            mean_adjusted,
            winner,
            case_winners,
        });
    }

    let crossovers = if cases.is_empty() {
        Vec::new()
    } else {
        find_crossovers(&cases, &strategies, &points, mode)?
    };
    Ok(SweepResult {
        mode,
        grid: grid.to_vec(),
        points,
        crossovers,
    })
}

fn find_crossovers(
    cases: &[(CaseKey, BTreeMap<Strategy, &EvalResult>)],
    strategies: &[Strategy],
    points: &[SweepPoint],
    mode: BonusMode,
) -> Result<Vec<Crossover>, AnalysisError> {
    // The adjusted difference of two strategies is linear in the bonus, so it
    // is fixed by its values at 0 and 1.
    let at0 = means_at(cases, strategies, 0.0, mode)?;
    let at1 = means_at(cases, strategies, 1.0, mode)?;
    let first = &points[0].mean_adjusted;
    let mut out = Vec::new();
    for (i, &a) in strategies.iter().enumerate() {
        for &b in &strategies[i + 1..] {
            let (leader, challenger) = if first[&a] > first[&b] {
                (a, b)
            } else if first[&b] > first[&a] {
                (b, a)
            } else {
                continue;
            };
            let Some(p) = points
                .iter()
                .find(|p| p.mean_adjusted[&leader] <= p.mean_adjusted[&challenger])
            else {
                continue;
            };
            let d0 = at0[&leader] - at0[&challenger];
            let d1 = at1[&leader] - at1[&challenger];
            let exact_bonus = if d0 == d1 { p.bonus } else { d0 / (d0 - d1) };
            out.push(Crossover {
                leader,
                challenger,
                bonus: p.bonus,
                exact_bonus,
            });
        }
    }
    Ok(out)
}

/// Headline numbers published alongside a fixture, used to flag
/// disagreements with the recomputed tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub wins: usize,
    pub win_rate_percent: f64,
    pub mean_similarity: f64,
    pub mean_tokens: f64,
    pub token_savings_percent: f64,
}

pub type PublishedSummary = BTreeMap<Strategy, PublishedRow>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteRow {
    pub note_id: String,
    pub size_tokens: usize,
    pub size_class: SizeClass,
    pub similarity: BTreeMap<Strategy, f64>,
    pub best: Strategy,
    pub clear_tokens: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub overall: WinTable,
    pub buckets: BTreeMap<SizeClass, WinTable>,
    pub notes: Vec<NoteRow>,
    pub sweep: Option<SweepResult>,
    pub discrepancies: Vec<String>,
}

impl Report {
    pub fn empty() -> Self {
        Self {
            overall: WinTable::default(),
            buckets: SizeClass::ALL.into_iter().map(|c| (c, WinTable::default())).collect(),
            notes: Vec::new(),
            sweep: None,
            discrepancies: Vec::new(),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Similarities and tokens per strategy for one note.
type NoteSamples = BTreeMap<Strategy, (Vec<f64>, Vec<f64>)>;

/// Per-note rows: similarities and tokens averaged over the note's questions
/// and models, winner chosen with the usual tie chain.
fn note_rows(results: &[EvalResult], sizes: &BTreeMap<String, NoteSize>) -> Result<Vec<NoteRow>, MetricError> {
    let mut by_note: Vec<(String, NoteSamples)> = Vec::new();
    for r in results {
        let idx = match by_note.iter().position(|(id, _)| *id == r.note_id) {
            Some(i) => i,
            None => {
                by_note.push((r.note_id.clone(), BTreeMap::new()));
                by_note.len() - 1
            }
        };
        let e = by_note[idx].1.entry(r.strategy).or_default();
        e.0.push(r.semantic_similarity);
        e.1.push(r.total_tokens as f64);
    }
    by_note
        .into_iter()
        .map(|(note_id, per)| {
            let size = *sizes
                .get(&note_id)
                .ok_or_else(|| MetricError::UnknownNote(note_id.clone()))?;
            let similarity: BTreeMap<Strategy, f64> = per.iter().map(|(&s, (sims, _))| (s, mean(sims))).collect();
            let best = pick_winner(per.iter().map(|(&s, (sims, toks))| (s, mean(sims), mean(toks))))
                .expect("note has results");
            Ok(NoteRow {
                note_id,
                size_tokens: size.tokens,
                size_class: size.class,
                similarity,
                best,
                clear_tokens: per.get(&Strategy::Clear).map(|(_, t)| mean(t)),
            })
        })
        .collect()
}

fn compare_published(overall: &WinTable, published: &PublishedSummary) -> Vec<String> {
    let mut out = Vec::new();
    for (&s, p) in published {
        let Some(row) = overall.row(s) else { continue };
        if row.wins != p.wins {
            out.push(format!(
                "{s}: published wins {}/{} disagree with the per-note rows, which give {}/{}.",
                p.wins, overall.cases, row.wins, overall.cases
            ));
        }
        if (row.mean_similarity - p.mean_similarity).abs() > 0.0005 {
            out.push(format!(
                "{s}: published mean similarity {:.3} differs from the per-note mean {:.3}.",
                p.mean_similarity, row.mean_similarity
            ));
        }
        if s == Strategy::Wide && (row.mean_tokens - p.mean_tokens).abs() > 1.0 {
            out.push(format!(
                "{s}: published mean tokens {:.0} differ from the mean of per-note sizes {:.1}.",
                p.mean_tokens, row.mean_tokens
            ));
        }
    }
    out
}

pub fn build_report(
    results: &[EvalResult],
    sizes: &BTreeMap<String, NoteSize>,
    sweep: Option<SweepResult>,
    published: Option<&PublishedSummary>,
) -> Result<Report, AnalysisError> {
    let overall = win_table(results)?;
    let buckets = bucket_analysis(results, sizes)?;
    let notes = note_rows(results, sizes)?;
    let discrepancies = published
        .map(|p| compare_published(&overall, p))
        .unwrap_or_default();
    Ok(Report {
        overall,
        buckets,
        notes,
        sweep,
        discrepancies,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}` (expected md or csv)")),
        }
    }
}

pub const OVERALL_COLUMNS: [&str; 6] = [
    "Strategy",
    "Wins",
    "Win Rate %",
    "Avg Semantic Sim.",
    "Avg Tokens",
    "Token Savings vs Wide %",
];

fn overall_rows(t: &WinTable) -> Vec<Vec<String>> {
    let mut rows: Vec<&crate::metrics::StrategyRow> = t.rows.iter().collect();
    rows.sort_by_key(|r| std::cmp::Reverse(r.strategy.preference()));
    rows.into_iter()
        .map(|r| {
            vec![
                r.strategy.label().to_string(),
                format!("{}/{}", r.wins, t.cases),
                format!("{:.1}", r.win_rate * 100.0),
                format!("{:.3}", r.mean_similarity),
                format!("{:.0}", r.mean_tokens),
                r.token_savings_vs_wide
                    .map_or("n/a".to_string(), |s| format!("{:.1}", s * 100.0)),
            ]
        })
        .collect()
}

fn note_columns(report: &Report) -> (Vec<String>, Vec<Strategy>) {
    let strategies: Vec<Strategy> = Strategy::ALL
        .into_iter()
        .filter(|s| report.notes.iter().any(|n| n.similarity.contains_key(s)))
        .collect();
    let mut cols = vec!["Note ID".to_string(), "Size".to_string()];
    cols.extend(strategies.iter().map(|s| format!("{} Sim.", s.label())));
    cols.push("Best Strategy".into());
    cols.push("CLEAR Tokens".into());
    (cols, strategies)
}

fn note_table_rows(report: &Report, strategies: &[Strategy]) -> Vec<Vec<String>> {
    report
        .notes
        .iter()
        .map(|n| {
            let mut row = vec![n.note_id.clone(), n.size_tokens.to_string()];
            row.extend(
                strategies
                    .iter()
                    .map(|s| n.similarity.get(s).map_or("n/a".into(), |v| format!("{v:.3}"))),
            );
            row.push(n.best.label().to_string());
            row.push(n.clear_tokens.map_or("n/a".into(), |t| format!("{t:.0}")));
            row
        })
        .collect()
}

fn md_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}|", header.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
}

fn csv_line(fields: &[String]) -> String {
    fields
        .iter()
        .map(|f| {
            if f.contains([',', '"', '\n']) {
                format!("\"{}\"", f.replace('"', "\"\""))
            } else {
                f.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn sweep_summary_lines(sweep: &Option<SweepResult>) -> Vec<String> {
    let Some(s) = sweep else {
        return vec!["no sweep requested".to_string()];
    };
    let mut lines = Vec::new();
    if let (Some(first), Some(last)) = (s.points.first(), s.points.last()) {
        lines.push(format!(
            "Bonus grid {:.2} to {:.2} ({} points, {} mode). Winner at {:.2}: {}; at {:.2}: {}.",
            first.bonus,
            last.bonus,
            s.points.len(),
            match s.mode {
                BonusMode::PerNote => "per-note",
                BonusMode::CorpusMean => "corpus-mean",
            },
            first.bonus,
            first.winner,
            last.bonus,
            last.winner
        ));
    }
    if s.crossovers.is_empty() {
        lines.push("No crossovers within the grid.".to_string());
    }
    for c in &s.crossovers {
        lines.push(format!(
            "{} overtakes {} at bonus {:.2} (exact {:.4}).",
            c.challenger, c.leader, c.bonus, c.exact_bonus
        ));
    }
    lines
}

pub fn render_report(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Csv => render_csv(report),
    }
}

fn render_markdown(report: &Report) -> String {
    let mut out = String::new();
    out.push_str("# Overall performance\n\n");
    md_table(&mut out, &strings(&OVERALL_COLUMNS), &overall_rows(&report.overall));

    out.push_str("\n# Results by note\n\n");
    let (cols, strategies) = note_columns(report);
    md_table(&mut out, &cols, &note_table_rows(report, &strategies));

    out.push_str("\n# Results by size class\n");
    for (class, t) in &report.buckets {
        let _ = writeln!(out, "\n## {class} ({} cases)\n", t.cases);
        md_table(&mut out, &strings(&OVERALL_COLUMNS), &overall_rows(t));
    }

    out.push_str("\n# Efficiency bonus sweep\n\n");
    for line in sweep_summary_lines(&report.sweep) {
        let _ = writeln!(out, "{line}");
    }

    if !report.discrepancies.is_empty() {
        out.push_str("\n# Discrepancies with published summary\n\n");
        for d in &report.discrepancies {
            let _ = writeln!(out, "- {d}");
        }
    }
    out
}

fn render_csv(report: &Report) -> String {
    let mut out = String::new();
    out.push_str("# overall\n");
    let _ = writeln!(out, "{}", csv_line(&strings(&OVERALL_COLUMNS)));
    for r in overall_rows(&report.overall) {
        let _ = writeln!(out, "{}", csv_line(&r));
    }

    out.push_str("\n# notes\n");
    let (cols, strategies) = note_columns(report);
    let _ = writeln!(out, "{}", csv_line(&cols));
    for r in note_table_rows(report, &strategies) {
        let _ = writeln!(out, "{}", csv_line(&r));
    }

    out.push_str("\n# buckets\n");
    let mut header = vec!["Size Class".to_string()];
    header.extend(strings(&OVERALL_COLUMNS));
    let _ = writeln!(out, "{}", csv_line(&header));
    for (class, t) in &report.buckets {
        for r in overall_rows(t) {
            let mut line = vec![class.to_string()];
            line.extend(r);
            let _ = writeln!(out, "{}", csv_line(&line));
        }
    }

    out.push_str("\n# sweep\n");
    for line in sweep_summary_lines(&report.sweep) {
        let _ = writeln!(out, "{}", csv_line(&[line]));
    }

    if !report.discrepancies.is_empty() {
        out.push_str("\n# discrepancies\n");
        for d in &report.discrepancies {
            let _ = writeln!(out, "{}", csv_line(std::slice::from_ref(d)));
        }
    }
    out
}

/// Long-format sweep table: `bonus,strategy,mean_adjusted,winner`.
pub fn render_sweep_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("bonus,strategy,mean_adjusted,winner\n");
    for p in &sweep.points {
        for (s, m) in &p.mean_adjusted {
            let _ = writeln!(out, "{:.4},{},{:.6},{}", p.bonus, s.label(), m, p.winner.label());
        }
    }
    out
}
