//! Completion backends for syntax inference.
//!
//! Two implementations ship: an HTTP client speaking the
//! OpenAI-compatible chat-completion wire format, and a fixture backend
//! replaying recorded completions so the whole inference path runs
//! hermetically without network access.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },
    #[error("backend returned an unusable response: {0}")]
    BadResponse(String),
    #[error("fixture corpus at {0} is missing or unreadable: {1}")]
    Fixture(String, String),
    #[error("backend configuration error: {0}")]
    Config(String),
}

/// A previous (completion, validation errors) round, fed back to the
/// model on retry.
#[derive(Debug, Clone)]
pub struct PriorExchange {
    pub completion: String,
    pub errors: Vec<String>,
}

/// A pluggable completion source. Implementations must be safe for
/// concurrent `complete` calls.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str, prior: Option<&PriorExchange>) -> Result<String, BackendError>;
    fn model_id(&self) -> &str;
}

/// Replays an ordered list of recorded completions. When the recording
/// is exhausted, the final completion is repeated, keeping behavior
/// deterministic under any retry count.
pub struct FixtureBackend {
    replies: Vec<String>,
    cursor: AtomicUsize,
    model_id: String,
}

impl FixtureBackend {
    pub fn from_replies<I: IntoIterator<Item = String>>(replies: I) -> Result<Self, BackendError> {
        let replies: Vec<String> = replies.into_iter().collect();
        if replies.is_empty() {
            return Err(BackendError::Config(
                "fixture backend needs at least one recorded completion".into(),
            ));
        }
        Ok(FixtureBackend {
            replies,
            cursor: AtomicUsize::new(0),
            model_id: "fixture".into(),
        })
    }

    /// Loads `completion.1.txt`, `completion.2.txt`, ... from a command's
    /// fixture directory.
    pub fn from_dir(dir: &Path) -> Result<Self, BackendError> {
        let mut replies = Vec::new();
        for n in 1.. {
            let path = dir.join(format!("completion.{n}.txt"));
            if !path.exists() {
                break;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| {
                BackendError::Fixture(path.display().to_string(), e.to_string())
            })?;
            replies.push(text);
        }
        if replies.is_empty() {
            return Err(BackendError::Fixture(
                dir.display().to_string(),
                "no completion.N.txt files found".into(),
            ));
        }
        Ok(FixtureBackend {
            replies,
            cursor: AtomicUsize::new(0),
            model_id: "fixture".into(),
        })
    }
}

impl LlmBackend for FixtureBackend {
    fn complete(&self, _prompt: &str, _prior: Option<&PriorExchange>) -> Result<String, BackendError> {
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        Ok(self.replies[i.min(self.replies.len() - 1)].clone())
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// A backend that fails transport for test purposes.
pub struct FailingBackend;

impl LlmBackend for FailingBackend {
    fn complete(&self, _prompt: &str, _prior: Option<&PriorExchange>) -> Result<String, BackendError> {
        Err(BackendError::Transport {
            endpoint: "test".into(),
            message: "injected failure".into(),
        })
    }

    fn model_id(&self) -> &str {
        "failing"
    }
}

/// OpenAI-compatible chat-completion client. Endpoint, model, and key
/// come from config or the `CMDSPEC_LLM_ENDPOINT` / `CMDSPEC_LLM_MODEL`
/// / `CMDSPEC_LLM_API_KEY` environment variables.
#[cfg(feature = "http-backend")]
pub struct HttpBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http-backend")]
impl HttpBackend {
    pub fn new(endpoint: String, model: String, api_key: Option<String>) -> Self {
        HttpBackend {
            endpoint,
            model,
            api_key,
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn from_env() -> Result<Self, BackendError> {
        let endpoint = std::env::var("CMDSPEC_LLM_ENDPOINT")
            .map_err(|_| BackendError::Config("CMDSPEC_LLM_ENDPOINT is not set".into()))?;
        let model = std::env::var("CMDSPEC_LLM_MODEL")
            .map_err(|_| BackendError::Config("CMDSPEC_LLM_MODEL is not set".into()))?;
        let api_key = std::env::var("CMDSPEC_LLM_API_KEY").ok();
        Ok(HttpBackend::new(endpoint, model, api_key))
    }
}

#[cfg(feature = "http-backend")]
impl LlmBackend for HttpBackend {
    fn complete(&self, prompt: &str, prior: Option<&PriorExchange>) -> Result<String, BackendError> {
        let mut messages = vec![serde_json::json!({
            "role": "user",
            "content": prompt,
        })];
        if let Some(prior) = prior {
            messages.push(serde_json::json!({
                "role": "assistant",
                "content": prior.completion,
            }));
            messages.push(serde_json::json!({
                "role": "user",
                "content": format!(
                    "The previous specification was invalid:\n{}\nEmit a corrected document.",
                    prior.errors.join("\n")
                ),
            }));
        }
        let body = serde_json::json!({
            "model": self.model,
            "messages": messages,
            // temperature pinned for reproducible retries
            "temperature": 0,
        });
        let url = format!("{}/chat/completions", self.endpoint.trim_end_matches('/'));
        let mut request = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| BackendError::Transport {
            endpoint: url.clone(),
            message: e.to_string(),
        })?;
        if !response.status().is_success() {
            return Err(BackendError::Transport {
                endpoint: url,
                message: format!("HTTP {}", response.status()),
            });
        }
        let value: serde_json::Value = response
            .json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| {
                BackendError::BadResponse("missing choices[0].message.content".into())
            })
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}
