use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use clearbench_core::analysis::{build_report, default_grid, sweep, BonusMode, Report};
use clearbench_core::corpus::Corpus;
use clearbench_core::metrics::{CaseKey, EvalResult};
use clearbench_core::providers::{ProviderKind, RemoteProvider};
use clearbench_core::retrieval::{ContextPackage, PromptTemplates, Strategy};
use clearbench_core::runner::{Engine, ResultSet};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRequest {
    pub note_id: String,
    pub question_id: String,
    pub strategy: Strategy,
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub templates: Option<PromptTemplates>,
    /// Defaults to the service's provider.
    #[serde(default)]
    pub provider: Option<ProviderKind>,
}

fn default_model() -> String {
    clearbench_core::runner::MOCK_MODEL_ID.to_string()
}

/// A completed experiment, as returned by the API and stored in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub request: ExperimentRequest,
    pub result: EvalResult,
    pub answer: String,
    pub context: ContextPackage,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub prompt_hash: String,
    pub config_hash: String,
    pub provider: ProviderKind,
    pub latency_ms: u64,
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Experiment(Box<ExperimentRecord>),
    Replay(ResultSet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Job {
    Pending { id: String },
    Done(Box<ExperimentRecord>),
    Failed { id: String, class: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportSource {
    Empty,
    Replay,
    Experiments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPayload {
    pub source: ReportSource,
    pub report: Report,
    pub config_hash: String,
}

#[derive(Debug, Default)]
struct Log {
    experiments: Vec<ExperimentRecord>,
    replay: Option<ResultSet>,
}

pub struct AppState {
    pub corpus: Corpus,
    pub engine: Engine,
    pub provider: ProviderKind,
    pub remote: Option<Arc<RemoteProvider>>,
    pub bonus_mode: BonusMode,
    log: RwLock<Log>,
    log_path: Option<PathBuf>,
    log_file: Mutex<()>,
    jobs: Mutex<HashMap<String, Job>>,
    next_id: Mutex<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("experiment log {path}: {message}")]
    Log { path: String, message: String },
}

impl AppState {
    pub fn new(
        corpus: Corpus,
        engine: Engine,
        remote: Option<RemoteProvider>,
        bonus_mode: BonusMode,
        log_path: Option<PathBuf>,
    ) -> Result<Self, StateError> {
        let mut log = Log::default();
        if let Some(path) = &log_path {
            for entry in read_log(path)? {
                match entry {
                    LogEntry::Experiment(e) => log.experiments.push(*e),
                    LogEntry::Replay(r) => log.replay = Some(r),
                }
            }
        }
        let next = log.experiments.len() as u64 + 1;
        Ok(Self {
            corpus,
            engine,
            provider: if remote.is_some() {
                ProviderKind::Remote
            } else {
                ProviderKind::Mock
            },
            remote: remote.map(Arc::new),
            bonus_mode,
            log: RwLock::new(log),
            log_path,
            log_file: Mutex::new(()),
            jobs: Mutex::new(HashMap::new()),
            next_id: Mutex::new(next),
        })
    }

    pub fn config_hash(&self) -> &str {
        self.engine.config_hash()
    }

    pub(crate) fn next_id(&self) -> String {
        let mut n = self.next_id.lock().unwrap_or_else(|e| e.into_inner());
        let id = format!("exp-{:06}", *n);
        *n += 1;
        id
    }

    fn append(&self, entry: &LogEntry) {
        let Some(path) = &self.log_path else { return };
        let _guard = self.log_file.lock().unwrap_or_else(|e| e.into_inner());
        let line = serde_json::to_string(entry).expect("log entry serializes");
        let res = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = res {
            tracing::warn!("cannot append to experiment log {}: {e}", path.display());
        }
    }

    pub fn record_experiment(&self, rec: ExperimentRecord) {
        let entry = LogEntry::Experiment(Box::new(rec));
        self.append(&entry);
        let LogEntry::Experiment(rec) = entry else { unreachable!() };
        self.log.write().unwrap_or_else(|e| e.into_inner()).experiments.push(*rec);
    }

    pub fn record_replay(&self, set: ResultSet) {
        let entry = LogEntry::Replay(set);
        self.append(&entry);
        let LogEntry::Replay(set) = entry else { unreachable!() };
        self.log.write().unwrap_or_else(|e| e.into_inner()).replay = Some(set);
    }

    pub(crate) fn set_job(&self, job: Job) {
        let id = match &job {
            Job::Pending { id } | Job::Failed { id, .. } => id.clone(),
            Job::Done(rec) => rec.id.clone(),
        };
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).insert(id, job);
    }

    pub(crate) fn job(&self, id: &str) -> Option<Job> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    pub fn experiments(&self) -> Vec<ExperimentRecord> {
        self.log.read().unwrap_or_else(|e| e.into_inner()).experiments.clone()
    }

    pub fn experiment(&self, id: &str) -> Option<ExperimentRecord> {
        let log = self.log.read().unwrap_or_else(|e| e.into_inner());
        log.experiments.iter().find(|e| e.id == id).cloned()
    }

    /// The replayed fixture if one was loaded, otherwise every complete case
    /// among logged experiments (latest result per case and strategy).
    pub fn report(&self) -> Result<ReportPayload, String> {
        let log = self.log.read().unwrap_or_else(|e| e.into_inner());
        let (source, set) = match &log.replay {
            Some(set) => (ReportSource::Replay, set.clone()),
            None => {
                let results = complete_cases(&log.experiments);
                if results.is_empty() {
                    (ReportSource::Empty, ResultSet::default())
                } else {
                    let sizes = self.corpus.note_sizes();
                    (
                        ReportSource::Experiments,
                        ResultSet {
                            results,
                            sizes,
                            published: None,
                        },
                    )
                }
            }
        };
        let report = if set.results.is_empty() {
            Report::empty()
        } else {
            let sw = sweep(&set.results, &default_grid(), self.bonus_mode).ok();
            build_report(&set.results, &set.sizes, sw, set.published.as_ref()).map_err(|e| e.to_string())?
        };
        Ok(ReportPayload {
            source,
            report,
            config_hash: self.config_hash().to_string(),
        })
    }
}

fn complete_cases(experiments: &[ExperimentRecord]) -> Vec<EvalResult> {
    let mut latest: BTreeMap<(CaseKey, Strategy), &EvalResult> = BTreeMap::new();
    let mut order: Vec<CaseKey> = Vec::new();
    for e in experiments {
        let key = e.result.case_key();
        if !order.contains(&key) {
            order.push(key.clone());
        }
        latest.insert((key, e.result.strategy), &e.result);
    }
    let strategies: Vec<Strategy> = Strategy::ALL
        .into_iter()
        .filter(|s| latest.keys().any(|(_, x)| x == s))
        .collect();
    let mut out = Vec::new();
    for key in order {
        let rs: Vec<&EvalResult> = strategies
            .iter()
            .filter_map(|&s| latest.get(&(key.clone(), s)).copied())
            .collect();
        if rs.len() == strategies.len() {
            out.extend(rs.into_iter().cloned());
        }
    }
    out
}

fn read_log(path: &Path) -> Result<Vec<LogEntry>, StateError> {
    let err = |message: String| StateError::Log {
        path: path.display().to_string(),
        message,
    };
    let raw = match std::fs::read_to_string(path) {
        Ok(r) => r,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(err(e.to_string())),
    };
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| err(format!("line {}: {e}", i + 1))))
        .collect()
}
