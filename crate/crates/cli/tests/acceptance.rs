//! Acceptance checks, one PASS/FAIL line per criterion.

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use clearbench_core::analysis::{build_report, parse_grid, sweep, BonusMode};
use clearbench_core::baseline::{chunk_note, rank_chunks, retrieve_rag, RagConfig};
use clearbench_core::clear::{build_windows, retrieve_clear, ClearParams, WindowConfig};
use clearbench_core::corpus::{Question, SizeClass};
use clearbench_core::entities::{extract_entities_indexed, Lexicon};
use clearbench_core::generator::build_default_corpus;
use clearbench_core::metrics::{
    align, bucket_analysis, cosine, meteor, meteor_words, token_savings, win_table, EvalResult, MeteorParams,
};
use clearbench_core::providers::{Embedder, HashingEmbedder};
use clearbench_core::retrieval::{Strategy, TokenBudget};
use clearbench_core::runner::{builtin_fixture, read_jsonl, Engine};
use clearbench_core::sectionizer::{parse_sections_indexed, SectionWeightTable};
use clearbench_core::text::WordIndex;
use oracles::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(x: f64, target: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((x - target).abs() <= tol, format!("{what} = {x}, want {target} ± {tol}"))
}

fn question(text: &str) -> Question {
    Question {
        id: "q".into(),
        text: text.into(),
        gold_answer: "g".into(),
    }
}

fn fixture_wins() -> Check {
    let set = builtin_fixture();
    let t = win_table(&set.results).map_err(|e| e.to_string())?;
    let wins = (t.wins(Strategy::Clear), t.wins(Strategy::Wide), t.wins(Strategy::Rag));
    ensure(wins == (8, 3, 1), format!("wins CLEAR/Wide/RAG = {wins:?}"))?;
    let b = bucket_analysis(&set.results, &set.sizes).map_err(|e| e.to_string())?;
    let per: Vec<(usize, usize)> = SizeClass::ALL
        .iter()
        .map(|c| (b[c].wins(Strategy::Clear), b[c].cases))
        .collect();
    ensure(per == [(3, 4), (2, 4), (3, 4)], format!("CLEAR buckets {per:?}"))?;
    let report = build_report(&set.results, &set.sizes, None, set.published.as_ref()).map_err(|e| e.to_string())?;
    ensure(
        report.discrepancies.iter().any(|d| d.contains("CLEAR") && d.contains("7/12")),
        "published 7/12 not flagged",
    )?;
    Ok(format!("wins {wins:?}, buckets {per:?}, 7/12 flagged"))
}

fn fixture_tokens() -> Check {
    let set = builtin_fixture();
    let t = win_table(&set.results).map_err(|e| e.to_string())?;
    let clear = t.row(Strategy::Clear).ok_or("no CLEAR row")?.mean_tokens;
    within(clear, 8456.0, 1.0, "mean CLEAR tokens")?;
    let s_clear = token_savings(8456.0, 39173.0).map_err(|e| e.to_string())? * 100.0;
    let s_rag = token_savings(544.0, 39173.0).map_err(|e| e.to_string())? * 100.0;
    within(s_clear, 78.4, 0.05, "CLEAR savings %")?;
    within(s_rag, 98.6, 0.05, "RAG savings %")?;
    Ok(format!("CLEAR tokens {clear:.2}, savings {s_clear:.2}% / {s_rag:.2}%"))
}

fn fixture_means() -> Check {
    let set = builtin_fixture();
    let t = win_table(&set.results).map_err(|e| e.to_string())?;
    let m = |s| t.row(s).map(|r| r.mean_similarity).ok_or(format!("no {s} row"));
    let (c, w, r) = (m(Strategy::Clear)?, m(Strategy::Wide)?, m(Strategy::Rag)?);
    within(c, 0.884, 0.001, "CLEAR mean")?;
    within(w, 0.858, 0.001, "Wide mean")?;
    within(r, 0.832, 0.001, "RAG mean")?;
    ensure(c > w && c > r, "CLEAR not strictly highest")?;
    Ok(format!("CLEAR {c:.4}, Wide {w:.4}, RAG {r:.4}"))
}

fn budget_invariance() -> Check {
    let corpus = build_default_corpus(42);
    let classes: Vec<SizeClass> = corpus.notes.iter().map(|n| n.size_class).collect();
    let want: Vec<SizeClass> = SizeClass::ALL.iter().flat_map(|&c| [c; 4]).collect();
    ensure(classes == want, format!("size classes {classes:?}"))?;
    let engine = Engine::default();
    let mut tokens = Vec::new();
    for note in &corpus.notes {
        for q in &corpus.questions {
            let pkg = engine.retrieve(Strategy::Clear, note, q).map_err(|e| e.to_string())?;
            ensure(
                pkg.context_tokens <= 8500,
                format!("{} {}: {} tokens", note.id, q.id, pkg.context_tokens),
            )?;
            tokens.push(pkg.context_tokens);
        }
    }
    let (lo, hi) = (*tokens.iter().min().unwrap(), *tokens.iter().max().unwrap());
    let ratio = hi as f64 / lo as f64;
    ensure(ratio <= 1.10, format!("max/min = {hi}/{lo} = {ratio:.3}"))?;
    Ok(format!("{} packages, {lo}..{hi} tokens, ratio {ratio:.3}", tokens.len()))
}

fn oracle_equivalence() -> Check {
    let embedder = HashingEmbedder::default();
    let weights = SectionWeightTable::default();
    let mut clear_checked = 0;
    let mut seed = 0u64;
    while clear_checked < 120 {
        seed += 1;
        let (note, q) = toy_note(seed, 500, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC1EA);
        let config = WindowConfig {
            radius_words: rng.gen_range(2..40),
            merge_gap_words: rng.gen_range(0..12),
            ..WindowConfig::default()
        };
        let budget = rng.gen_range(10..400);
        let words_idx = WordIndex::new(&note.text);
        let mut entities = extract_entities_indexed(&words_idx, Lexicon::builtin());
        entities.sort_by_key(|e| (e.start_word, e.end_word));
        ensure(entities.len() <= 10, format!("seed {seed}: {} entities", entities.len()))?;
        if entities.is_empty() {
            continue;
        }
        let sections = parse_sections_indexed(&words_idx, &weights);
        let ow = oracle_windows(
            &note.text,
            &entities,
            &sections,
            &q,
            &WindowWeights {
                radius: config.radius_words,
                alpha: config.alpha,
                beta: config.beta,
                gamma: config.gamma,
                delta: config.delta,
            },
            &embedder,
        );
        let lib = build_windows(&words_idx, &sections, &entities, &question(&q), &config, &embedder);
        ensure(ow.len() == lib.len(), format!("seed {seed}: window count"))?;
        for (a, b) in ow.iter().zip(&lib) {
            ensure(
                (a.start, a.end) == (b.start_word, b.end_word) && (a.score - b.score).abs() < 1e-12,
                format!("seed {seed}: window mismatch"),
            )?;
        }
        let expected = oracle_selection(&note.text, &ow, budget, config.merge_gap_words);
        let params = ClearParams {
            lexicon: Lexicon::builtin(),
            weights: &weights,
            config,
            budget: TokenBudget::new(budget).ok_or("zero budget")?,
        };
        let pkg = retrieve_clear(&note, &question(&q), &params, &embedder);
        let got: Vec<(usize, usize)> = pkg.segments.iter().map(|s| (s.start_word, s.end_word)).collect();
        ensure(got == expected, format!("seed {seed}: CLEAR {got:?} vs oracle {expected:?}"))?;
        clear_checked += 1;
    }

    for seed in 0..120u64 {
        let (note, q) = toy_note(seed + 10_000, 500, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2A6);
        let size = rng.gen_range(5..80);
        let overlap = rng.gen_range(0..size);
        let k = rng.gen_range(1..5);
        let ws = words(&note.text);
        let spans = oracle_chunks(ws.len(), size, overlap);
        let texts: Vec<String> = spans.iter().map(|&(s, e)| ws[s..e].join(" ")).collect();
        let chunks = chunk_note(&note, size, overlap, &embedder).map_err(|e| e.to_string())?;
        let expected: Vec<usize> = oracle_rank(&texts, &q, &embedder).into_iter().take(k).map(|p| p.0).collect();
        let got: Vec<usize> = rank_chunks(&embedder.embed(&q), &chunks, k).into_iter().map(|p| p.0).collect();
        ensure(got == expected, format!("seed {seed}: RAG {got:?} vs {expected:?}"))?;
        let cfg = RagConfig {
            chunk_size_words: size,
            overlap_words: overlap,
            k,
        };
        let pkg = retrieve_rag(&note, &question(&q), &cfg, &embedder).map_err(|e| e.to_string())?;
        let picked: Vec<(usize, usize)> = expected.iter().map(|&i| spans[i]).collect();
        ensure(
            pkg.context_tokens == mask_tokens(&ws, &cover(ws.len(), &picked, 0)),
            format!("seed {seed}: RAG context tokens"),
        )?;
    }
    Ok(format!("{clear_checked} CLEAR toy notes, 120 RAG toy notes"))
}

const VOCAB: [&str; 24] = [
    "patient", "anemia", "ferritin", "hemoglobin", "fatigue", "dyspnea", "edema", "furosemide", "iron", "pallor",
    "ejection", "fraction", "the", "of", "and", "was", "noted", "mg", "daily", "g/dL", "9.1", "BNP", "left", "ventricle",
];

fn random_string(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(8..60);
    let mut ws: Vec<String> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.6) {
                VOCAB.choose(rng).unwrap().to_string()
            } else {
                let len = rng.gen_range(3..10);
                (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
            }
        })
        .collect();
    // at least one content word
    ws[0] = "anemia".into();
    ws.shuffle(rng);
    ws.join(" ")
}

fn metric_properties() -> Check {
    let embedder = HashingEmbedder::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut worst_meteor = f64::INFINITY;
    let mut worst_cos: f64 = 0.0;
    for i in 0..1000 {
        let x = random_string(&mut rng);
        let m = meteor(&x, &x);
        worst_meteor = worst_meteor.min(m);
        ensure(m >= 0.999, format!("string {i}: meteor(x,x) = {m}"))?;
        let e = embedder.embed(&x);
        let c = cosine(&e, &e).map_err(|e| format!("string {i}: {e}"))?;
        worst_cos = worst_cos.max((c - 1.0).abs());
        ensure((c - 1.0).abs() <= 1e-9, format!("string {i}: cosine = {c}"))?;
    }

    let alphabet = ["a", "b", "c"];
    let sequences = all_sequences(&alphabet, 6);
    let multisets = all_multisets(&alphabet, 6);
    let mut pairs = 0;
    for m in &multisets {
        for s in &sequences {
            for (c, r) in [(s, m), (m, s)] {
                let (matches, chunks) = oracle_alignment(c, r);
                let a = align(c, r);
                ensure(
                    (a.matches(), a.chunks) == (matches, chunks),
                    format!("{c:?} vs {r:?}: chunks {} vs oracle {chunks}", a.chunks),
                )?;
                let got = meteor_words(c, r, MeteorParams::default());
                ensure(
                    (got - oracle_meteor(matches, chunks, c.len(), r.len())).abs() < 1e-12,
                    format!("{c:?} vs {r:?}: score"),
                )?;
                pairs += 1;
            }
        }
    }
    Ok(format!(
        "min meteor(x,x) {worst_meteor:.5}, max |cos-1| {worst_cos:.1e}, {pairs} alignment pairs"
    ))
}

fn run_once(dir: &Path, out: &str) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_clearbench"))
        .args(["run", "--config", "run.toml", "--out", out])
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        o.status.code() == Some(0),
        format!("exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)),
    )?;
    std::fs::read_to_string(dir.join(out)).map_err(|e| e.to_string())
}

fn strip_timestamps(raw: &str) -> Result<Vec<serde_json::Value>, String> {
    raw.lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).map_err(|e| e.to_string())?;
            let obj = v.as_object_mut().ok_or("record is not an object")?;
            obj.remove("started_at");
            obj.remove("finished_at");
            Ok(v)
        })
        .collect()
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("run.toml"), "seed = 42\nplacement = \"middle\"\nprovider = \"mock\"\n")
        .map_err(|e| e.to_string())?;
    let a = run_once(dir.path(), "a.jsonl")?;
    let b = run_once(dir.path(), "b.jsonl")?;
    let (va, vb) = (strip_timestamps(&a)?, strip_timestamps(&b)?);
    ensure(va.len() == 72, format!("{} records", va.len()))?;
    ensure(va == vb, "runs differ beyond timestamps")?;
    let records = read_jsonl(&dir.path().join("a.jsonl")).map_err(|e| e.to_string())?;
    ensure(records.iter().all(|r| r.is_ok()), "failed cells in mock run")?;
    let mean = |s: Strategy| {
        let v: Vec<f64> = records
            .iter()
            .filter(|r| r.strategy == s)
            .filter_map(|r| r.semantic_similarity)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (c, r) = (mean(Strategy::Clear), mean(Strategy::Rag));
    ensure(c >= r, format!("CLEAR {c:.4} < RAG {r:.4}"))?;
    Ok(format!("72 records, deterministic, CLEAR {c:.4} >= RAG {r:.4}"))
}

fn result(case: &str, strategy: Strategy, sim: f64, tokens: usize) -> EvalResult {
    EvalResult {
        note_id: case.into(),
        question_id: "q".into(),
        strategy,
        model_id: "m".into(),
        answer: String::new(),
        semantic_similarity: sim,
        meteor: None,
        total_tokens: tokens,
        context_tokens: tokens,
    }
}

/// Sign changes of `a - b` along the grid, ignoring exact ties.
fn pair_checks(means: &[BTreeMap<Strategy, f64>], a: Strategy, b: Strategy) -> Result<usize, String> {
    let d: Vec<f64> = means.iter().map(|m| m[&a] - m[&b]).collect();
    let up = d.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let down = d.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    ensure(up || down, format!("{a} - {b} not monotone"))?;
    let signs: Vec<f64> = d.iter().filter(|x| x.abs() > 1e-12).map(|x| x.signum()).collect();
    Ok(signs.windows(2).filter(|w| w[0] != w[1]).count())
}

fn sweep_properties() -> Check {
    let grid = parse_grid("0:0.2:0.01").map_err(|e| e.to_string())?;
    let mut sets = vec![builtin_fixture().results];
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..50 {
        let mut rs = Vec::new();
        for n in 0..rng.gen_range(1..15) {
            let case = format!("n{n}");
            let wide = rng.gen_range(1_000..80_000);
            rs.push(result(&case, Strategy::Wide, rng.gen_range(0.5..1.0), wide));
            rs.push(result(&case, Strategy::Rag, rng.gen_range(0.5..1.0), rng.gen_range(100..2_000)));
            rs.push(result(&case, Strategy::Clear, rng.gen_range(0.5..1.0), rng.gen_range(500..wide)));
        }
        sets.push(rs);
    }
    let pairs = [
        (Strategy::Clear, Strategy::Wide),
        (Strategy::Clear, Strategy::Rag),
        (Strategy::Rag, Strategy::Wide),
    ];
    for (i, rs) in sets.iter().enumerate() {
        let plain = win_table(rs).map_err(|e| e.to_string())?.ranking_by_similarity();
        for mode in [BonusMode::PerNote, BonusMode::CorpusMean] {
            let sw = sweep(rs, &grid, mode).map_err(|e| e.to_string())?;
            ensure(sw.ranking_at(0) == plain, format!("set {i} {mode:?}: bonus 0 ranking"))?;
            let means: Vec<BTreeMap<Strategy, f64>> = sw.points.iter().map(|p| p.mean_adjusted.clone()).collect();
            for (a, b) in pairs {
                let n = pair_checks(&means, a, b)?;
                ensure(n <= 1, format!("set {i} {mode:?}: {a}/{b} crosses {n} times"))?;
            }
        }
    }

    let toy = vec![
        result("t", Strategy::Wide, 0.9, 10_000),
        result("t", Strategy::Rag, 0.8, 1_000),
    ];
    let sw = sweep(&toy, &grid, BonusMode::PerNote).map_err(|e| e.to_string())?;
    let x = sw
        .crossovers
        .iter()
        .find(|c| c.leader == Strategy::Wide && c.challenger == Strategy::Rag)
        .ok_or("no toy crossover")?;
    within(x.bonus, 0.10, 0.01 + 1e-9, "toy crossover")?;
    let flip = sw
        .points
        .iter()
        .find(|p| p.mean_adjusted[&Strategy::Rag] >= p.mean_adjusted[&Strategy::Wide])
        .ok_or("RAG never catches up")?;
    within(flip.bonus, 0.10, 0.01 + 1e-9, "first grid point with RAG >= Wide")?;
    Ok(format!("{} result sets, toy crossover at {:.2} (exact {:.4})", sets.len(), x.bonus, x.exact_bonus))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("fixture wins and size buckets", fixture_wins, Duration::from_secs(1)),
        ("fixture token means and savings", fixture_tokens, Duration::from_secs(1)),
        ("fixture similarity means", fixture_means, Duration::from_secs(1)),
        ("CLEAR budget invariance on default corpus", budget_invariance, Duration::from_secs(30)),
        ("CLEAR and RAG oracle equivalence", oracle_equivalence, Duration::from_secs(60)),
        ("metric properties", metric_properties, Duration::from_secs(600)),
        ("end-to-end offline run", end_to_end, Duration::from_secs(600)),
        ("efficiency sweep properties", sweep_properties, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let t = Instant::now();
        let outcome = check();
        let took = t.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > limit => Err(format!("{detail}; took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name} ({took:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({took:.2?}): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
