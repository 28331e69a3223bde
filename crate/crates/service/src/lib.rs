//! HTTP/JSON API over the retrieval engine for interactive experiments.
//!
//! Endpoints:
//! - `GET  /api/corpus[?full=1]`: note and question summaries
//! - `GET  /api/presets`: builtin prompt presets
//! - `POST /api/experiments`: run one strategy/prompt combination
//! - `GET  /api/experiments`, `GET /api/experiments/{id}`: log and job polling
//! - `GET  /api/report`: win table, size buckets and bonus sweep
//! - `POST /api/replay`: load a results fixture as the report source
//!
//! Every response carries the engine config hash in `x-config-hash`.

mod error;
mod state;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{middleware, Json, Router};
use clearbench_core::corpus::{Question, SizeClass};
use clearbench_core::presets::{builtin_presets, find_preset, PromptPreset};
use clearbench_core::providers::{AnswerProvider, AnswerRequest, MockProvider, ProviderKind};
use clearbench_core::retrieval::PromptTemplates;
use clearbench_core::runner::{builtin_fixture, parse_fixture, prompt_hash};
use serde::Serialize;
use serde_json::Value;
use tower_http::cors::{Any, CorsLayer};

pub use error::ApiError;
pub use state::{
    AppState, ExperimentRecord, ExperimentRequest, Job, LogEntry, ReportPayload, ReportSource, StateError,
};

pub const CONFIG_HASH_HEADER: &str = "x-config-hash";
pub const PREVIEW_BYTES: usize = 1024;

type Shared = Arc<AppState>;

pub fn router(state: AppState) -> Router {
    let state = Arc::new(state);
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers([HeaderName::from_static(CONFIG_HASH_HEADER)]);
    Router::new()
        .route("/api/corpus", get(corpus))
        .route("/api/presets", get(presets))
        .route("/api/experiments", post(run_experiment).get(list_experiments))
        .route("/api/experiments/{id}", get(get_experiment))
        .route("/api/report", get(report))
        .route("/api/replay", post(replay))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(middleware::map_response_with_state(state.clone(), stamp_hash))
        .layer(cors)
        .with_state(state)
}

async fn stamp_hash(State(state): State<Shared>, mut resp: Response) -> Response {
    if let Ok(v) = HeaderValue::from_str(state.config_hash()) {
        resp.headers_mut().insert(CONFIG_HASH_HEADER, v);
    }
    resp
}

pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Serialize)]
struct NoteSummary {
    id: String,
    token_size: usize,
    size_class: SizeClass,
    preview: String,
    truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

#[derive(Debug, Serialize)]
struct CorpusSummary<'a> {
    notes: Vec<NoteSummary>,
    questions: &'a [Question],
    config_hash: &'a str,
}

fn preview(text: &str) -> &str {
    if text.len() <= PREVIEW_BYTES {
        return text;
    }
    let mut end = PREVIEW_BYTES;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

fn flag(params: &HashMap<String, String>, key: &str) -> bool {
    params
        .get(key)
        .is_some_and(|v| matches!(v.as_str(), "1" | "true" | "yes" | ""))
}

async fn corpus(State(state): State<Shared>, Query(params): Query<HashMap<String, String>>) -> Response {
    let full = flag(&params, "full");
    let notes = state
        .corpus
        .notes
        .iter()
        .map(|n| {
            let p = preview(&n.text);
            NoteSummary {
                id: n.id.clone(),
                token_size: n.token_size,
                size_class: n.size_class,
                truncated: p.len() < n.text.len(),
                preview: p.to_string(),
                text: full.then(|| n.text.clone()),
            }
        })
        .collect();
    Json(CorpusSummary {
        notes,
        questions: &state.corpus.questions,
        config_hash: state.config_hash(),
    })
    .into_response()
}

async fn presets() -> Json<Vec<PromptPreset>> {
    Json(builtin_presets())
}

fn parse_body<T: serde::de::DeserializeOwned>(body: Result<Json<Value>, JsonRejection>) -> Result<T, ApiError> {
    let Json(v) = body.map_err(|e| ApiError::unprocessable(e.body_text()))?;
    serde_json::from_value(v).map_err(|e| ApiError::unprocessable(e.to_string()))
}

struct Prepared {
    id: String,
    request: ExperimentRequest,
    answer_request: AnswerRequest,
    prompt_hash: String,
    provider: ProviderKind,
}

fn resolve_templates(req: &ExperimentRequest) -> Result<PromptTemplates, ApiError> {
    match (&req.preset, &req.templates) {
        (Some(_), Some(_)) => Err(ApiError::unprocessable("give either `preset` or `templates`, not both")),
        (None, None) => Err(ApiError::unprocessable("one of `preset` or `templates` is required")),
        (Some(id), None) => find_preset(id)
            .map(|p| p.templates)
            .ok_or_else(|| ApiError::not_found(format!("unknown preset `{id}`"))),
        (None, Some(t)) => {
            t.validate().map_err(|e| ApiError::unprocessable(e.to_string()))?;
            Ok(t.clone())
        }
    }
}

/// Validate ids and templates and build the context.
fn prepare(state: &AppState, request: ExperimentRequest) -> Result<Prepared, ApiError> {
    let note = state
        .corpus
        .note(&request.note_id)
        .map_err(|e| ApiError::not_found(e.to_string()))?;
    let question = state
        .corpus
        .question(&request.question_id)
        .map_err(|e| ApiError::not_found(e.to_string()))?;
    let templates = resolve_templates(&request)?;
    if request.model_id.trim().is_empty() {
        return Err(ApiError::unprocessable("model_id must be non-empty"));
    }
    let provider = request.provider.unwrap_or(state.provider);
    if provider == ProviderKind::Remote && state.remote.is_none() {
        return Err(ApiError::unprocessable("the remote provider is not configured on this service"));
    }
    let context = state
        .engine
        .retrieve(request.strategy, note, question)
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    Ok(Prepared {
        id: state.next_id(),
        prompt_hash: prompt_hash(question, &templates),
        answer_request: AnswerRequest {
            model_id: request.model_id.clone(),
            templates,
            context,
            question: question.clone(),
        },
        request,
        provider,
    })
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Generate and score. Blocking.
fn execute(state: &AppState, p: Prepared) -> Result<ExperimentRecord, ApiError> {
    let resp = match p.provider {
        ProviderKind::Mock => MockProvider.generate(&p.answer_request),
        ProviderKind::Remote => state
            .remote
            .as_ref()
            .expect("checked in prepare")
            .generate(&p.answer_request),
    }
    .map_err(|e| ApiError::provider(e.class(), e.to_string()))?;
    let gold = &p.answer_request.question.gold_answer;
    let (sim, met) = state.engine.score(&resp.text, gold);
    let ctx = p.answer_request.context;
    let result = clearbench_core::metrics::EvalResult {
        note_id: p.request.note_id.clone(),
        question_id: p.request.question_id.clone(),
        strategy: p.request.strategy,
        model_id: p.request.model_id.clone(),
        answer: resp.text.clone(),
        semantic_similarity: sim,
        meteor: Some(met),
        total_tokens: resp.total_tokens(),
        context_tokens: ctx.context_tokens,
    };
    Ok(ExperimentRecord {
        id: p.id,
        request: p.request,
        result,
        answer: resp.text,
        context: ctx,
        prompt_tokens: resp.prompt_tokens,
        completion_tokens: resp.completion_tokens,
        prompt_hash: p.prompt_hash,
        config_hash: state.config_hash().to_string(),
        provider: p.provider,
        latency_ms: resp.latency_ms,
        created_at_ms: now_ms(),
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))
}

async fn run_experiment(State(state): State<Shared>, body: Result<Json<Value>, JsonRejection>) -> Response {
    let request: ExperimentRequest = match parse_body(body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    let st = state.clone();
    let prepared = match blocking(move || prepare(&st, request)).await {
        Ok(Ok(p)) => p,
        Ok(Err(e)) | Err(e) => return e.into_response(),
    };
    match prepared.provider {
        ProviderKind::Mock => {
            let st = state.clone();
            match blocking(move || execute(&st, prepared)).await {
                Ok(Ok(rec)) => {
                    state.record_experiment(rec.clone());
                    Json(rec).into_response()
                }
                Ok(Err(e)) | Err(e) => e.into_response(),
            }
        }
        ProviderKind::Remote => {
            let id = prepared.id.clone();
            state.set_job(Job::Pending { id: id.clone() });
            let st = state.clone();
            tokio::task::spawn_blocking(move || {
                let job_id = prepared.id.clone();
                let job = match execute(&st, prepared) {
                    Ok(rec) => {
                        st.record_experiment(rec.clone());
                        Job::Done(Box::new(rec))
                    }
                    Err(e) => Job::Failed {
                        id: job_id,
                        class: e.class,
                        message: e.message,
                    },
                };
                st.set_job(job);
            });
            (StatusCode::ACCEPTED, Json(Job::Pending { id })).into_response()
        }
    }
}

async fn list_experiments(State(state): State<Shared>) -> Json<Vec<ExperimentRecord>> {
    Json(state.experiments())
}

async fn get_experiment(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    match state.job(&id) {
        Some(Job::Failed { class, message, .. }) => ApiError::provider(&class, message).into_response(),
        Some(job @ Job::Pending { .. }) => (StatusCode::ACCEPTED, Json(job)).into_response(),
        Some(job @ Job::Done(_)) => Json(job).into_response(),
        None => match state.experiment(&id) {
            Some(rec) => Json(Job::Done(Box::new(rec))).into_response(),
            None => ApiError::not_found(format!("unknown experiment `{id}`")).into_response(),
        },
    }
}

async fn report(State(state): State<Shared>) -> Response {
    match state.report() {
        Ok(p) => Json(p).into_response(),
        Err(e) => ApiError::internal(e).into_response(),
    }
}

/// Body: a results fixture, or nothing for the builtin one.
async fn replay(State(state): State<Shared>, body: axum::body::Bytes) -> Response {
    let set = if body.iter().all(u8::is_ascii_whitespace) {
        builtin_fixture()
    } else {
        let raw = match std::str::from_utf8(&body) {
            Ok(r) => r,
            Err(e) => return ApiError::unprocessable(e.to_string()).into_response(),
        };
        match parse_fixture(raw) {
            Ok(s) => s,
            Err(e) => return ApiError::unprocessable(e.to_string()).into_response(),
        }
    };
    state.record_replay(set);
    report(State(state)).await
}
