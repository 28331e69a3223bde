use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use rayon::prelude::*;

use super::config::{ConfigError, RunConfig};
use super::engine::{sha256_hex, Engine};
use super::record::{record_line, write_jsonl, LogError, RunRecord, STATUS_OK};
use crate::corpus::{ClinicalNote, Corpus, Question};
use crate::providers::{AnswerProvider, AnswerRequest, MockProvider, ProviderKind, RemoteProvider};
use crate::retrieval::{prompt_skeleton, PromptTemplates, Strategy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const EXIT_FAILED: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("provider setup failed: {0}")]
    Provider(String),
    #[error(transparent)]
    Log(#[from] LogError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Provider(_) => EXIT_CONFIG,
            RunError::Log(_) => EXIT_FAILED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
}

impl RunOutcome {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.is_ok()).count()
    }

    /// 0 when every cell succeeded, 4 when none did, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.failures() {
            0 => EXIT_OK,
            n if n == self.records.len() => EXIT_FAILED,
            _ => EXIT_PARTIAL,
        }
    }
}

/// Sha256 of the prompt with `{context}` left unfilled.
pub fn prompt_hash(question: &Question, templates: &PromptTemplates) -> String {
    sha256_hex(prompt_skeleton(question, templates).text().as_bytes())
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct Matrix<'a> {
    pub corpus: &'a Corpus,
    pub engine: &'a Engine,
    pub provider: &'a dyn AnswerProvider,
    pub templates: &'a PromptTemplates,
    pub strategies: &'a [Strategy],
    pub models: &'a [String],
    pub config_hash: &'a str,
    pub concurrency: usize,
}

struct Unit<'a> {
    order: usize,
    note: &'a ClinicalNote,
    question: &'a Question,
    strategy: Strategy,
}

impl Matrix<'_> {
    pub fn cell_count(&self) -> usize {
        self.corpus.notes.len() * self.corpus.questions.len() * self.strategies.len() * self.models.len()
    }

    /// Execute every cell. Finished records are appended to `partial_log`
    /// as they complete; the returned records are in canonical order
    /// (corpus note order, question order, strategy order, model order).
    pub fn run(&self, partial_log: Option<&Path>) -> Result<Vec<RunRecord>, LogError> {
        let log = match partial_log {
            Some(p) => Some(Mutex::new(open_append(p)?)),
            None => None,
        };
        let mut units = Vec::new();
        for note in &self.corpus.notes {
            for question in &self.corpus.questions {
                for &strategy in self.strategies {
                    units.push(Unit {
                        order: units.len(),
                        note,
                        question,
                        strategy,
                    });
                }
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.concurrency.max(1))
            .build()
            .expect("thread pool");
        let mut done: Vec<(usize, Vec<RunRecord>)> = pool.install(|| {
            units
                .par_iter()
                .map(|u| {
                    let recs = self.run_unit(u);
                    if let Some(log) = &log {
                        let mut f = log.lock().unwrap_or_else(|e| e.into_inner());
                        for r in &recs {
                            if let Err(e) = writeln!(f, "{}", record_line(r)) {
                                tracing::warn!("partial log append failed: {e}");
                            }
                        }
                    }
                    (u.order, recs)
                })
                .collect()
        });
        done.sort_by_key(|(o, _)| *o);
        Ok(done.into_iter().flat_map(|(_, r)| r).collect())
    }

    fn run_unit(&self, u: &Unit<'_>) -> Vec<RunRecord> {
        let phash = prompt_hash(u.question, self.templates);
        let retrieved = self.engine.retrieve(u.strategy, u.note, u.question);
        self.models
            .iter()
            .map(|model| {
                let started_at = now();
                let clock = Instant::now();
                let mut rec = RunRecord {
                    note_id: u.note.id.clone(),
                    question_id: u.question.id.clone(),
                    strategy: u.strategy,
                    model_id: model.clone(),
                    status: STATUS_OK.to_string(),
                    error: None,
                    answer: String::new(),
                    semantic_similarity: None,
                    meteor: None,
                    prompt_tokens: 0,
                    completion_tokens: 0,
                    total_tokens: 0,
                    context_tokens: 0,
                    note_tokens: u.note.token_size,
                    provenance: Vec::new(),
                    provider: self.provider.kind(),
                    config_hash: self.config_hash.to_string(),
                    prompt_hash: phash.clone(),
                    latency_ms: 0,
                    started_at,
                    finished_at: String::new(),
                };
                match &retrieved {
                    Err(e) => {
                        rec.status = "retrieval_error".into();
                        rec.error = Some(e.to_string());
                    }
                    Ok(pkg) => {
                        rec.context_tokens = pkg.context_tokens;
                        rec.provenance = pkg.provenance.clone();
                        let req = AnswerRequest {
                            model_id: model.clone(),
                            templates: self.templates.clone(),
                            context: pkg.clone(),
                            question: u.question.clone(),
                        };
                        match self.provider.generate(&req) {
                            Ok(resp) => {
                                let (sim, met) = self.engine.score(&resp.text, &u.question.gold_answer);
                                rec.semantic_similarity = Some(sim);
                                rec.meteor = Some(met);
                                rec.prompt_tokens = resp.prompt_tokens;
                                rec.completion_tokens = resp.completion_tokens;
                                rec.total_tokens = resp.total_tokens();
                                rec.latency_ms = resp.latency_ms;
                                rec.answer = resp.text;
                            }
                            Err(e) => {
                                rec.status = e.class().to_string();
                                rec.error = Some(e.to_string());
                                if self.provider.kind() == ProviderKind::Remote {
                                    rec.latency_ms = clock.elapsed().as_millis() as u64;
                                }
                            }
                        }
                    }
                }
                rec.finished_at = now();
                rec
            })
            .collect()
    }
}

fn open_append(path: &Path) -> Result<File, LogError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| LogError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| LogError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn partial_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".partial");
    PathBuf::from(s)
}

/// Run the full matrix described by `config`. With `out`, records stream to
/// `<out>.partial` during the run and the canonical log replaces `out` at the
/// end.
pub fn run_matrix(config: &RunConfig, out: Option<&Path>) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let templates = config.templates()?;
    let engine = config.engine()?;
    let corpus = config.load_corpus()?;
    let remote;
    let mock = MockProvider;
    let provider: &dyn AnswerProvider = match config.provider {
        ProviderKind::Mock => &mock,
        ProviderKind::Remote => {
            let rc = config.remote_config()?;
            remote = RemoteProvider::new(rc).map_err(|e| RunError::Provider(e.to_string()))?;
            &remote
        }
    };
    let hash = config.config_hash();
    let matrix = Matrix {
        corpus: &corpus,
        engine: &engine,
        provider,
        templates: &templates,
        strategies: &config.strategies,
        models: &config.models,
        config_hash: &hash,
        concurrency: config.concurrency,
    };
    let partial = out.map(partial_path);
    if let Some(p) = &partial {
        let _ = std::fs::remove_file(p);
    }
    let records = matrix.run(partial.as_deref())?;
    if let Some(out) = out {
        write_jsonl(out, &records)?;
        if let Some(p) = &partial {
            let _ = std::fs::remove_file(p);
        }
    }
    Ok(RunOutcome { records })
}
