use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{AnswerProvider, AnswerRequest, AnswerResponse, ProviderError, ProviderKind};
use crate::retrieval::assemble_prompt;
use crate::text::count_tokens;

pub const ENV_URL: &str = "CLEARBENCH_LLM_URL";
pub const ENV_KEY: &str = "CLEARBENCH_LLM_KEY";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Full chat-completions URL, or a base URL to which
    /// `/chat/completions` is appended.
    pub url: String,
    pub api_key: Option<String>,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            max_retries: 3,
            backoff_base: Duration::from_millis(250),
            timeout: Duration::from_secs(120),
            max_in_flight: 4,
        }
    }

    /// Read endpoint and key from `CLEARBENCH_LLM_URL` / `CLEARBENCH_LLM_KEY`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let url = std::env::var(ENV_URL)
            .map_err(|_| ProviderError::NotConfigured(format!("{ENV_URL} is not set")))?;
        let mut cfg = Self::new(url);
        cfg.api_key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }

    fn endpoint(&self) -> String {
        let url = self.url.trim_end_matches('/');
        if url.ends_with("/chat/completions") {
            url.to_string()
        } else {
            format!("{url}/chat/completions")
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteProvider {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    in_flight: InFlight,
    next_request: AtomicU64,
}

#[derive(Debug, Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    prompt_tokens: usize,
    completion_tokens: usize,
}

enum Attempt {
    Done(Result<AnswerResponse, ProviderError>),
    Retry(ProviderError),
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::NotConfigured(e.to_string()))?;
        Ok(Self {
            in_flight: InFlight {
                limit: config.max_in_flight.max(1),
                active: Mutex::new(0),
                freed: Condvar::new(),
            },
            config,
            client,
            next_request: AtomicU64::new(1),
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, req: &AnswerRequest, body: &serde_json::Value, request_id: &str) -> Attempt {
        let started = Instant::now();
        let mut call = self
            .client
            .post(self.config.endpoint())
            .header("x-request-id", request_id)
            .json(body);
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let transport = |message: String| ProviderError::Transport {
            model_id: req.model_id.clone(),
            request_id: request_id.to_string(),
            message,
        };
        let protocol = |message: String| ProviderError::Protocol {
            model_id: req.model_id.clone(),
            request_id: request_id.to_string(),
            message,
        };

        let resp = match call.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(transport(e.to_string())),
        };
        let status = resp.status();
        if status == 401 || status == 403 {
            return Attempt::Done(Err(ProviderError::Credential {
                model_id: req.model_id.clone(),
                request_id: request_id.to_string(),
                status: status.as_u16(),
            }));
        }
        if status == 429 || status.is_server_error() {
            return Attempt::Retry(transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Attempt::Done(Err(protocol(format!("unexpected HTTP {status}"))));
        }
        let raw = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(transport(e.to_string())),
        };
        let parsed: CompletionBody = match serde_json::from_str(&raw) {
            Ok(p) => p,
            Err(e) => return Attempt::Done(Err(protocol(format!("malformed body: {e}")))),
        };
        let Some(text) = parsed.choices.into_iter().next().and_then(|c| c.message.content) else {
            return Attempt::Done(Err(protocol("response has no message content".into())));
        };
        let (prompt_tokens, completion_tokens) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => {
                let prompt = body["messages"]
                    .as_array()
                    .map(|m| m.iter().filter_map(|x| x["content"].as_str()).map(count_tokens).sum())
                    .unwrap_or(0);
                (prompt, count_tokens(&text))
            }
        };
        Attempt::Done(Ok(AnswerResponse {
            text,
            prompt_tokens,
            completion_tokens,
            model_id: req.model_id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
        }))
    }
}

impl AnswerProvider for RemoteProvider {
    fn generate(&self, req: &AnswerRequest) -> Result<AnswerResponse, ProviderError> {
        let prompt = assemble_prompt(&req.context, &req.question, &req.templates)?;
        let body = json!({
            "model": req.model_id,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        });
        let request_id = format!(
            "cb-{}-{}",
            std::process::id(),
            self.next_request.fetch_add(1, Ordering::Relaxed)
        );
        let _permit = self.in_flight.acquire();
        let mut retries = 0;
        loop {
            match self.attempt(req, &body, &request_id) {
                Attempt::Done(result) => return result,
                Attempt::Retry(err) if retries >= self.config.max_retries => return Err(err),
                Attempt::Retry(err) => {
                    let delay = self.config.backoff_base * 2u32.saturating_pow(retries);
                    tracing::debug!(%err, ?delay, "retrying chat completion");
                    std::thread::sleep(delay);
                    retries += 1;
                }
            }
        }
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }
}
