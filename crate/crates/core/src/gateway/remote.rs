//! Chat-completion over HTTP: `POST <endpoint>` with
//! `{"model", "messages": [{"role": "system", "content": prompt}], "temperature"}`,
//! answered by `{"choices": [{"message": {"content": "..."}}], "usage": {...}}`.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, ChatRequest, RawReply, TemplateId, TokenUsage};

pub const ENV_ENDPOINT: &str = "IPG_ENDPOINT";
pub const ENV_API_KEY: &str = "IPG_API_KEY";
pub const ENV_MODEL: &str = "IPG_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    /// Per-template overrides of the default temperatures.
    #[serde(default)]
    pub temperatures: BTreeMap<TemplateId, f64>,
}

impl RemoteConfig {
    /// Reads endpoint, key and model from the environment. The endpoint is
    /// required.
    pub fn from_env() -> Result<Self, BackendError> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| BackendError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        Ok(RemoteConfig {
            endpoint,
            api_key: std::env::var(ENV_API_KEY).ok().filter(|s| !s.is_empty()),
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".into()),
            timeout_secs: 300,
            temperatures: BTreeMap::new(),
        })
    }

    pub fn temperature(&self, id: TemplateId) -> f64 {
        self.temperatures
            .get(&id)
            .copied()
            .unwrap_or_else(|| id.default_temperature())
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct Body<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
}

#[derive(Deserialize)]
struct Reply {
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: String,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        RemoteBackend { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, r: &ChatRequest<'_>) -> Result<RawReply, BackendError> {
        let body = Body {
            model: &self.config.model,
            messages: [Message {
                role: "system",
                content: r.prompt,
            }],
            temperature: self.config.temperature(r.template),
        };
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let transport = |e: ureq::Error| match e {
            ureq::Error::StatusCode(code) => BackendError::Transport {
                status: Some(code),
                message: format!("endpoint answered HTTP {code}"),
            },
            other => BackendError::Transport {
                status: None,
                message: other.to_string(),
            },
        };
        let mut resp = req.send_json(&body).map_err(transport)?;
        let reply: Reply = resp.body_mut().read_json().map_err(transport)?;
        let content = reply
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Transport {
                status: None,
                message: "reply has no choices".into(),
            })?;
        Ok(RawReply {
            text: content,
            tokens: reply.usage.map(|u| TokenUsage {
                prompt: u.prompt_tokens,
                completion: u.completion_tokens,
            }),
        })
    }
}
