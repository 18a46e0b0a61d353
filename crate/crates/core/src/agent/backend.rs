use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::RepairPrompt;
use crate::analyze::FailureCategory;

/// Where repair responses come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    /// Scripted responses keyed by (round, primary category).
    Mock { script_path: PathBuf },
    /// A chat-completion HTTP endpoint.
    Remote {
        endpoint_url: String,
        model_name: String,
        #[serde(default = "default_max_tokens")]
        max_tokens: u32,
        #[serde(default)]
        temperature: f64,
        /// Environment variable holding the bearer token.
        api_key_env_var: String,
        #[serde(default = "default_request_timeout")]
        request_timeout_seconds: u64,
        /// First retry delay; doubled for each further retry.
        #[serde(default = "default_retry_delay")]
        retry_base_delay_ms: u64,
    },
}

fn default_max_tokens() -> u32 {
    4096
}

fn default_request_timeout() -> u64 {
    300
}

fn default_retry_delay() -> u64 {
    1000
}

/// Total attempts a remote request gets before the backend is declared
/// unavailable.
pub const REMOTE_ATTEMPTS: u32 = 3;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("mock script has no entry for round {round} and {category}")]
    MockMiss {
        round: usize,
        category: FailureCategory,
    },
}

pub trait Backend {
    fn complete(
        &self,
        prompt: &RepairPrompt,
        round: usize,
        primary: FailureCategory,
    ) -> Result<String, BackendError>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    pub round: usize,
    pub primary_category: FailureCategory,
    /// Relative to the script file.
    pub response_file: PathBuf,
}

/// Table-driven backend: a JSON list of [`MockEntry`].
#[derive(Clone, Debug)]
pub struct MockBackend {
    entries: Vec<MockEntry>,
    base: PathBuf,
}

impl MockBackend {
    pub fn load(script_path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(script_path).map_err(|e| {
            BackendError::Unavailable(format!("mock script {}: {e}", script_path.display()))
        })?;
        let entries: Vec<MockEntry> = serde_json::from_str(&text).map_err(|e| {
            BackendError::Unavailable(format!("mock script {}: {e}", script_path.display()))
        })?;
        Ok(MockBackend {
            entries,
            base: script_path.parent().map(Path::to_owned).unwrap_or_default(),
        })
    }

    pub fn entries(&self) -> &[MockEntry] {
        &self.entries
    }
}

impl Backend for MockBackend {
    fn complete(
        &self,
        _prompt: &RepairPrompt,
        round: usize,
        primary: FailureCategory,
    ) -> Result<String, BackendError> {
        let entry = self
            .entries
            .iter()
            .find(|e| e.round == round && e.primary_category == primary)
            .ok_or(BackendError::MockMiss {
                round,
                category: primary,
            })?;
        let path = self.base.join(&entry.response_file);
        std::fs::read_to_string(&path).map_err(|e| {
            BackendError::Unavailable(format!("mock response {}: {e}", path.display()))
        })
    }
}

#[derive(Clone, Debug)]
pub struct RemoteBackend {
    pub endpoint_url: String,
    pub model_name: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub api_key: Option<String>,
    pub request_timeout: Duration,
    pub retry_base_delay: Duration,
}

enum Attempt {
    Transient(String),
    Fatal(String),
}

impl RemoteBackend {
    pub fn request_body(&self, prompt: &RepairPrompt) -> Value {
        json!({
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": prompt.system_preamble},
                {"role": "user", "content": prompt.body},
            ],
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        })
    }

    fn attempt(&self, agent: &ureq::Agent, body: &Value) -> Result<String, Attempt> {
        let mut req = agent.post(&self.endpoint_url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| Attempt::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Attempt::Transient(format!("HTTP {status}")));
        }
        if status >= 400 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(Attempt::Fatal(format!("HTTP {status}: {text}")));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(format!("response is not JSON: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| Attempt::Fatal("response has no choices[0].message.content".into()))
    }
}

impl Backend for RemoteBackend {
    fn complete(
        &self,
        prompt: &RepairPrompt,
        _round: usize,
        _primary: FailureCategory,
    ) -> Result<String, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let body = self.request_body(prompt);
        let mut last = String::new();
        for attempt in 0..REMOTE_ATTEMPTS {
            if attempt > 0 {
                thread::sleep(self.retry_base_delay * 2u32.pow(attempt - 1));
            }
            match self.attempt(&agent, &body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(BackendError::Unavailable(e)),
                Err(Attempt::Transient(e)) => {
                    log::warn!("request attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(BackendError::Unavailable(format!(
            "{REMOTE_ATTEMPTS} attempts failed, last: {last}"
        )))
    }
}

/// Instantiates the configured backend. Relative mock script paths are
/// resolved against `base_dir`.
pub fn make_backend(
    config: &BackendConfig,
    base_dir: &Path,
) -> Result<Box<dyn Backend>, BackendError> {
    match config {
        BackendConfig::Mock { script_path } => {
            Ok(Box::new(MockBackend::load(&base_dir.join(script_path))?))
        }
        BackendConfig::Remote {
            endpoint_url,
            model_name,
            max_tokens,
            temperature,
            api_key_env_var,
            request_timeout_seconds,
            retry_base_delay_ms,
        } => {
            let api_key = std::env::var(api_key_env_var).ok();
            if api_key.is_none() {
                log::warn!("{api_key_env_var} is not set; sending requests without a bearer token");
            }
            Ok(Box::new(RemoteBackend {
                endpoint_url: endpoint_url.clone(),
                model_name: model_name.clone(),
                max_tokens: *max_tokens,
                temperature: *temperature,
                api_key,
                request_timeout: Duration::from_secs(*request_timeout_seconds),
                retry_base_delay: Duration::from_millis(*retry_base_delay_ms),
            }))
        }
    }
}
