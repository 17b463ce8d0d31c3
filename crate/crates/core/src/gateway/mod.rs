//! Prompt rendering, backends, strict-JSON replies and the correction loop.

mod json;
pub mod mock;
pub mod remote;
mod templates;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use json::{parse_strict_json, strip_fence, StrictJson, StrictJsonError};
pub use templates::{
    render_prompt, BraceStyle, PromptTemplate, TemplateError, TemplateId, TemplateSet, ANALYSIS, CODE, CODE_FIX,
    CODE_FIX_PYTHON, CODE_PYTHON, GENERATE, GENERATE_FIX, SUFFICIENCY,
};

pub type Fields = BTreeMap<String, String>;

/// Which backend a session talks to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// The offline fixture backend.
    #[default]
    Mock,
    /// An HTTP chat-completion endpoint configured from the environment.
    Remote,
}

/// What a backend sees for one call.
#[derive(Debug, Clone)]
pub struct ChatRequest<'a> {
    pub template: TemplateId,
    pub prompt: &'a str,
    pub fields: &'a Fields,
    pub seed_id: &'a str,
    /// 1-based attempt number within one [`request_with_retry`] call.
    pub attempt: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawReply {
    pub text: String,
    pub tokens: Option<TokenUsage>,
}

impl RawReply {
    pub fn text(text: impl Into<String>) -> Self {
        RawReply {
            text: text.into(),
            tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("transport error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("no fixture for seed `{seed}`, template `{template}`")]
    NoFixture { seed: String, template: TemplateId },
    #[error("backend configuration: {0}")]
    Config(String),
}

/// A chat-completion service. Implementations must be safe to share
/// between generation workers.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<RawReply, BackendError>;
}

/// One reply after parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendResponse {
    pub raw: String,
    /// Present iff the template expects JSON and strict parsing succeeded.
    pub document: Option<serde_json::Value>,
    pub fenced: bool,
    pub latency: Duration,
    pub tokens: Option<TokenUsage>,
}

impl BackendResponse {
    /// Reply text with one surrounding markdown fence removed.
    pub fn body(&self) -> &str {
        strip_fence(&self.raw).unwrap_or(&self.raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub template: TemplateId,
    pub attempt: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("`{stage}` gave no acceptable reply in {} attempts; last error: {}", attempts.len(), attempts.last().map(|a| a.error.as_str()).unwrap_or("none"))]
    BudgetExhausted {
        stage: TemplateId,
        attempts: Vec<AttemptLog>,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Call counters for a session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallStats {
    pub total_calls: u64,
    pub calls_per_stage: BTreeMap<String, u64>,
    /// Backend calls spent on each accepted problem, in acceptance order.
    pub calls_per_accepted: Vec<u64>,
    pub fenced_replies: u64,
}

impl CallStats {
    pub fn accepted_range(&self) -> Option<(u64, u64)> {
        Some((
            *self.calls_per_accepted.iter().min()?,
            *self.calls_per_accepted.iter().max()?,
        ))
    }
}

/// Attempt limit per request plus shared, monotone counters.
#[derive(Debug)]
pub struct CallBudget {
    pub max_attempts: u32,
    total: AtomicU64,
    fenced: AtomicU64,
    stages: Mutex<BTreeMap<TemplateId, u64>>,
    accepted: Mutex<Vec<u64>>,
}

impl CallBudget {
    pub fn new(max_attempts: u32) -> Self {
        CallBudget {
            max_attempts: max_attempts.max(1),
            total: AtomicU64::new(0),
            fenced: AtomicU64::new(0),
            stages: Mutex::new(BTreeMap::new()),
            accepted: Mutex::new(Vec::new()),
        }
    }

    pub fn total_calls(&self) -> u64 {
        self.total.load(Ordering::SeqCst)
    }

    pub fn stage_calls(&self, id: TemplateId) -> u64 {
        self.stages.lock().expect("stats lock").get(&id).copied().unwrap_or(0)
    }

    fn count(&self, id: TemplateId) {
        self.total.fetch_add(1, Ordering::SeqCst);
        *self.stages.lock().expect("stats lock").entry(id).or_default() += 1;
    }

    pub fn record_accepted(&self, calls: u64) {
        self.accepted.lock().expect("stats lock").push(calls);
    }

    pub fn stats(&self) -> CallStats {
        CallStats {
            total_calls: self.total_calls(),
            calls_per_stage: self
                .stages
                .lock()
                .expect("stats lock")
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            calls_per_accepted: self.accepted.lock().expect("stats lock").clone(),
            fenced_replies: self.fenced.load(Ordering::SeqCst),
        }
    }
}

/// A successful request: the validated value and the calls it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<T> {
    pub value: T,
    pub calls: u32,
    pub response: BackendResponse,
}

/// Sends `template` until `validate` accepts a reply, at most
/// `budget.max_attempts` times.
///
/// JSON templates are strictly parsed before validation. After a failure
/// the paired correction template (if the stage has one) is used, with
/// `error_message` set to the failure. HTTP error statuses use up an
/// attempt; other backend errors end the request. A `last_error` starts the request on
/// the correction template straight away.
#[allow(clippy::too_many_arguments)]
pub fn request_with_retry<T, F>(
    backend: &dyn Backend,
    templates: &TemplateSet,
    template: TemplateId,
    fields: &Fields,
    seed_id: &str,
    budget: &CallBudget,
    last_error: Option<String>,
    mut validate: F,
) -> Result<Outcome<T>, GatewayError>
where
    F: FnMut(&BackendResponse) -> Result<T, String>,
{
    let mut attempts = Vec::new();
    let mut error = last_error;
    for attempt in 1..=budget.max_attempts {
        let id = match (&error, template.fix()) {
            (Some(_), Some(fix)) => fix,
            _ => template,
        };
        let mut fields = fields.clone();
        if let Some(e) = &error {
            fields.insert("error_message".into(), e.clone());
        }
        let prompt = templates.render(id, &fields)?;
        let started = Instant::now();
        budget.count(id);
        let reply = match backend.complete(&ChatRequest {
            template: id,
            prompt: &prompt,
            fields: &fields,
            seed_id,
            attempt,
        }) {
            Ok(reply) => reply,
            // The service answered with an error status; try again. Failing
            // to reach it at all is fatal.
            Err(BackendError::Transport {
                status: Some(status),
                message,
            }) => {
                attempts.push(AttemptLog {
                    template: id,
                    attempt,
                    error: format!("HTTP {status}: {message}"),
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut response = BackendResponse {
            raw: reply.text,
            document: None,
            fenced: false,
            latency: started.elapsed(),
            tokens: reply.tokens,
        };
        let checked = if id.expects_json() {
            match parse_strict_json(&response.raw) {
                Ok(parsed) => {
                    response.document = Some(parsed.document);
                    response.fenced = parsed.fenced;
                    validate(&response)
                }
                Err(e) => Err(format!("Response was not strict JSON: {e}")),
            }
        } else {
            response.fenced = strip_fence(&response.raw).is_some();
            validate(&response)
        };
        if response.fenced {
            budget.fenced.fetch_add(1, Ordering::SeqCst);
        }
        match checked {
            Ok(value) => {
                return Ok(Outcome {
                    value,
                    calls: attempt,
                    response,
                })
            }
            Err(e) => {
                attempts.push(AttemptLog {
                    template: id,
                    attempt,
                    error: e.clone(),
                });
                error = Some(e);
            }
        }
    }
    Err(GatewayError::BudgetExhausted {
        stage: template,
        attempts,
    })
}
