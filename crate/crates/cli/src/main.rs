use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use clearbench_core::analysis::{
    build_report, default_grid, parse_grid, render_report, render_sweep_csv, sweep, BonusMode, ReportFormat,
};
use clearbench_core::corpus::{load_corpus, save_corpus};
use clearbench_core::generator::{build_corpus, Placement, DEFAULT_TARGETS};
use clearbench_core::providers::{RemoteConfig, RemoteProvider};
use clearbench_core::runner::{
    builtin_fixture, load_results, replay_fixture, run_matrix, Engine, ResultSet, RunConfig, EXIT_CONFIG,
};
use clearbench_service::AppState;

#[derive(Parser)]
#[command(name = "clearbench", version, about = "Entity-aware clinical QA retrieval benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PerNote,
    CorpusMean,
}

impl From<Mode> for BonusMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::PerNote => BonusMode::PerNote,
            Mode::CorpusMean => BonusMode::CorpusMean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Md => ReportFormat::Markdown,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic twelve-note corpus.
    Generate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "middle")]
        placement: Placement,
    },
    /// Execute the note x question x strategy x model matrix.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Win table and size buckets of a results log or fixture, as JSON.
    Evaluate {
        #[arg(long)]
        results: PathBuf,
    },
    /// Full report: overall table, per-note rows, buckets, sweep.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
        /// Bonus grid as start:end:step.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, value_enum, default_value = "per-note")]
        mode: Mode,
    },
    /// Efficiency-bonus sweep as CSV.
    Sweep {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "0:0.2:0.01")]
        grid: String,
        #[arg(long, value_enum, default_value = "per-note")]
        mode: Mode,
    },
    /// Report over a results fixture; the builtin one when omitted.
    Replay {
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Corpus JSON; the default generated corpus when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Run config supplying engine settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Experiment log to replay on start and append to.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Answer with the remote endpoint from CLEARBENCH_LLM_URL.
        #[arg(long)]
        remote: bool,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}

/// Write to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load(path: &Path) -> Result<ResultSet> {
    load_results(path).with_context(|| format!("loading results from {}", path.display()))
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Generate { seed, out, placement } => {
            let corpus = build_corpus(seed, placement, &DEFAULT_TARGETS)?;
            save_corpus(&corpus, &out)?;
            let listing: String = corpus
                .notes
                .iter()
                .map(|n| format!("{}\t{}\t{}\n", n.id, n.token_size, n.size_class))
                .collect();
            emit(&listing)?;
            Ok(0)
        }
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = match (&cfg.output_dir, out.is_relative()) {
                (Some(dir), true) => dir.join(&out),
                _ => out,
            };
            match run_matrix(&cfg, Some(&out)) {
                Ok(outcome) => {
                    let failed = outcome.failures();
                    eprintln!(
                        "{} records written to {} ({} ok, {} failed)",
                        outcome.records.len(),
                        out.display(),
                        outcome.records.len() - failed,
                        failed
                    );
                    Ok(outcome.exit_code())
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    Ok(e.exit_code())
                }
            }
        }
        Command::Evaluate { results } => {
            let set = load(&results)?;
            let report = build_report(&set.results, &set.sizes, None, set.published.as_ref())?;
            let v = serde_json::json!({
                "overall": report.overall,
                "buckets": report.buckets,
                "discrepancies": report.discrepancies,
            });
            emit(&(serde_json::to_string_pretty(&v)? + "\n"))?;
            Ok(0)
        }
        Command::Report {
            results,
            format,
            grid,
            mode,
        } => {
            let set = load(&results)?;
            let grid = match grid {
                Some(g) => parse_grid(&g)?,
                None => default_grid(),
            };
            let sw = sweep(&set.results, &grid, mode.into()).ok();
            let report = build_report(&set.results, &set.sizes, sw, set.published.as_ref())?;
            emit(&render_report(&report, format.into()))?;
            Ok(0)
        }
        Command::Sweep { results, grid, mode } => {
            let set = load(&results)?;
            let sw = sweep(&set.results, &parse_grid(&grid)?, mode.into())?;
            emit(&render_sweep_csv(&sw))?;
            Ok(0)
        }
        Command::Replay { fixture, format } => {
            let set = match fixture {
                Some(p) => replay_fixture(&p).with_context(|| format!("replaying {}", p.display()))?,
                None => builtin_fixture(),
            };
            let sw = sweep(&set.results, &default_grid(), BonusMode::default()).ok();
            let report = build_report(&set.results, &set.sizes, sw, set.published.as_ref())?;
            emit(&render_report(&report, format.into()))?;
            Ok(0)
        }
        Command::Serve {
            port,
            host,
            corpus,
            config,
            log,
            remote,
        } => {
            let cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            let engine: Engine = cfg.engine()?;
            let corpus = match corpus {
                Some(p) => load_corpus(&p)?,
                None => cfg.load_corpus()?,
            };
            let remote = if remote {
                Some(RemoteProvider::new(RemoteConfig::from_env()?)?)
            } else {
                None
            };
            let state = AppState::new(corpus, engine, remote, cfg.bonus_mode, log)?;
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad --host/--port")?;
            tokio::runtime::Runtime::new()?.block_on(clearbench_service::serve(state, addr))?;
            Ok(0)
        }
    }
}
