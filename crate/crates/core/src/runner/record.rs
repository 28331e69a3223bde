use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::EvalResult;
use crate::providers::ProviderKind;
use crate::retrieval::Strategy;

pub const STATUS_OK: &str = "ok";

/// One executed (note, question, strategy, model) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub note_id: String,
    pub question_id: String,
    pub strategy: Strategy,
    pub model_id: String,
    /// `ok` or a provider error class such as `transport_error`.
    pub status: String,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub answer: String,
    #[serde(default)]
    pub semantic_similarity: Option<f64>,
    #[serde(default)]
    pub meteor: Option<f64>,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub total_tokens: usize,
    pub context_tokens: usize,
    pub note_tokens: usize,
    #[serde(default)]
    pub provenance: Vec<String>,
    pub provider: ProviderKind,
    pub config_hash: String,
    pub prompt_hash: String,
    pub latency_ms: u64,
    pub started_at: String,
    pub finished_at: String,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    /// Scored view of a successful record.
    pub fn to_eval_result(&self) -> Option<EvalResult> {
        if !self.is_ok() {
            return None;
        }
        Some(EvalResult {
            note_id: self.note_id.clone(),
            question_id: self.question_id.clone(),
            strategy: self.strategy,
            model_id: self.model_id.clone(),
            answer: self.answer.clone(),
            semantic_similarity: self.semantic_similarity?,
            meteor: self.meteor,
            total_tokens: self.total_tokens,
            context_tokens: self.context_tokens,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn record_line(record: &RunRecord) -> String {
    serde_json::to_string(record).expect("record serializes")
}

/// Write `records` as JSON lines, replacing `path` atomically.
pub fn write_jsonl(path: &Path, records: &[RunRecord]) -> Result<(), LogError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        for r in records {
            writeln!(w, "{}", record_line(r)).map_err(io_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

/// Parse a JSON-lines log. Blank lines are skipped.
pub fn parse_jsonl(raw: &str, path: &str) -> Result<Vec<RunRecord>, LogError> {
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| LogError::Parse {
                path: path.to_string(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RunRecord>, LogError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LogError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}
