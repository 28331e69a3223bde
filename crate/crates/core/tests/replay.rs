use clearbench_core::analysis::{build_report, parse_grid, render_report, sweep, BonusMode, ReportFormat};
use clearbench_core::corpus::SizeClass;
use clearbench_core::metrics::{bucket_analysis, token_savings, win_table};
use clearbench_core::retrieval::Strategy;
use clearbench_core::runner::builtin_fixture;

// Per-note similarities (wide, rag, clear) and CLEAR tokens, as published.
const ROWS: [(f64, f64, f64, f64); 12] = [
    (0.847, 0.807, 0.916, 8446.0),
    (0.880, 0.849, 0.894, 8493.0),
    (0.929, 0.835, 0.909, 8318.0),
    (0.857, 0.805, 0.878, 8436.0),
    (0.843, 0.836, 0.873, 8305.0),
    (0.869, 0.860, 0.903, 8571.0),
    (0.899, 0.871, 0.891, 8489.0),
    (0.910, 0.861, 0.892, 8500.0),
    (0.859, 0.870, 0.888, 8497.0),
    (0.842, 0.791, 0.885, 8485.0),
    (0.829, 0.830, 0.939, 8414.0),
    (0.730, 0.763, 0.742, 8525.0),
];

fn argmax_wins() -> [usize; 3] {
    let mut wins = [0; 3];
    for &(w, r, c, _) in &ROWS {
        let best = if c >= w && c >= r {
            2
        } else if r >= w {
            1
        } else {
            0
        };
        wins[best] += 1;
    }
    wins
}

#[test]
fn wins_match_row_argmax() {
    let set = builtin_fixture();
    let t = win_table(&set.results).unwrap();
    let [w, r, c] = argmax_wins();
    assert_eq!((t.wins(Strategy::Wide), t.wins(Strategy::Rag), t.wins(Strategy::Clear)), (w, r, c));
    assert_eq!((w, r, c), (3, 1, 8));
}

#[test]
fn means_and_savings() {
    let set = builtin_fixture();
    let t = win_table(&set.results).unwrap();
    let mean = |f: fn(&(f64, f64, f64, f64)) -> f64| ROWS.iter().map(f).sum::<f64>() / 12.0;
    let clear = t.row(Strategy::Clear).unwrap();
    assert!((clear.mean_similarity - mean(|r| r.2)).abs() < 1e-12);
    assert!((t.row(Strategy::Wide).unwrap().mean_similarity - mean(|r| r.0)).abs() < 1e-12);
    assert!((t.row(Strategy::Rag).unwrap().mean_similarity - mean(|r| r.1)).abs() < 1e-12);
    assert!((clear.mean_tokens - mean(|r| r.3)).abs() < 1e-9);
    assert!((clear.mean_tokens - 8456.0).abs() <= 1.0);
    assert!((token_savings(8456.0, 39173.0).unwrap() * 100.0 - 78.4).abs() <= 0.05);
    assert!((token_savings(544.0, 39173.0).unwrap() * 100.0 - 98.6).abs() <= 0.05);
}

#[test]
fn buckets() {
    let set = builtin_fixture();
    let b = bucket_analysis(&set.results, &set.sizes).unwrap();
    for class in SizeClass::ALL {
        assert_eq!(b[&class].cases, 4, "{class}");
    }
    assert_eq!(b[&SizeClass::Small].wins(Strategy::Clear), 3);
    assert_eq!(b[&SizeClass::Medium].wins(Strategy::Clear), 2);
    assert_eq!(b[&SizeClass::Large].wins(Strategy::Clear), 3);
}

#[test]
fn report_flags_published_disagreements() {
    let set = builtin_fixture();
    let report = build_report(&set.results, &set.sizes, None, set.published.as_ref()).unwrap();
    assert!(report.discrepancies.iter().any(|d| d.contains("CLEAR") && d.contains("7/12")));
    assert!(report.discrepancies.iter().any(|d| d.contains("Wide") && d.contains("39173")));
    let md = render_report(&report, ReportFormat::Markdown);
    assert!(md.contains("# Discrepancies with published summary"));
    let best: Vec<Strategy> = report.notes.iter().map(|n| n.best).collect();
    assert_eq!(best.iter().filter(|&&s| s == Strategy::Clear).count(), 8);
    assert_eq!(best[2], Strategy::Wide);
    assert_eq!(best[11], Strategy::Rag);
}

#[test]
fn sweep_on_fixture() {
    let set = builtin_fixture();
    for mode in [BonusMode::PerNote, BonusMode::CorpusMean] {
        let s = sweep(&set.results, &[0.0], mode).unwrap();
        assert_eq!(s.points[0].winner, Strategy::Clear);
        let fine = sweep(&set.results, &parse_grid("0:1:0.01").unwrap(), mode).unwrap();
        let mut last = usize::MAX;
        for i in 0..fine.points.len() {
            let rank = fine.ranking_at(i).iter().position(|&x| x == Strategy::Rag).unwrap();
            assert!(rank <= last, "RAG rank worsened at {}", fine.grid[i]);
            last = rank;
        }
    }
}
