use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{RenderedPrompt, SkillKind, SkillRequest};
use crate::trace::digest;

/// Environment variable holding the bearer token for [`HttpChatBackend`].
pub const API_KEY_ENV: &str = "KGQA_LLM_API_KEY";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Response(String),
    #[error("no scripted response for {0}")]
    NoScript(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) | BackendError::Timeout => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Identity of a request for scripted replay: skill kind, question and the
/// sorted ids of the context items.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestKey {
    pub skill: SkillKind,
    pub question: String,
    pub context_ids: Vec<String>,
}

impl RequestKey {
    pub fn of(request: &SkillRequest) -> Self {
        let mut context_ids: Vec<String> =
            request.context_items.iter().map(|c| c.id.clone()).collect();
        context_ids.sort();
        Self {
            skill: request.skill,
            question: request.question.clone(),
            context_ids,
        }
    }
}

impl fmt::Display for RequestKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} | {} | [{}]",
            self.skill,
            self.question,
            self.context_ids.join(", ")
        )
    }
}

pub struct ChatCall<'a> {
    pub key: &'a RequestKey,
    pub prompt: &'a RenderedPrompt,
    pub temperature: f32,
    pub max_tokens: usize,
    pub timeout: Duration,
}

/// A chat-completion backend. Implementations must be safe to call from
/// several threads.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, call: &ChatCall<'_>) -> Result<String, BackendError>;
}

/// One scripted rule.
///
/// Matching order: `prompt_hash`, then skill + question + exact `context`,
/// then skill + question, then skill with question `"*"`. Responses are
/// consumed in order and the last one repeats. A response of the form
/// `!transport <message>` simulates a retryable transport failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub skill: SkillKind,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    pub responses: Vec<String>,
}

/// Deterministic backend replaying a fixture table.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    cursors: Mutex<Vec<usize>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(mut entries: Vec<ScriptEntry>) -> Self {
        for e in &mut entries {
            if let Some(ctx) = e.context.as_mut() {
                ctx.sort();
            }
        }
        let n = entries.len();
        Self {
            entries,
            cursors: Mutex::new(vec![0; n]),
            calls: AtomicUsize::new(0),
        }
    }

    /// Fixture file: one JSON [`ScriptEntry`] per line.
    pub fn from_jsonl(path: &Path) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path)
            .map_err(|e| BackendError::Response(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| BackendError::Response(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line).map_err(|e| {
                BackendError::Response(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    /// Number of backend invocations so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn find(&self, key: &RequestKey, prompt_hash: &str) -> Option<usize> {
        let by = |pred: &dyn Fn(&ScriptEntry) -> bool| self.entries.iter().position(pred);
        by(&|e| e.prompt_hash.as_deref() == Some(prompt_hash))
            .or_else(|| {
                by(&|e| {
                    e.skill == key.skill
                        && e.question == key.question
                        && e.context.as_deref() == Some(key.context_ids.as_slice())
                })
            })
            .or_else(|| {
                by(&|e| {
                    e.skill == key.skill
                        && e.question == key.question
                        && e.context.is_none()
                        && e.prompt_hash.is_none()
                })
            })
            .or_else(|| {
                by(&|e| e.skill == key.skill && e.question == "*" && e.context.is_none())
            })
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat(&self, call: &ChatCall<'_>) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let hash = digest(&call.prompt.full_text());
        let index = self
            .find(call.key, &hash)
            .ok_or_else(|| BackendError::NoScript(call.key.to_string()))?;
        let entry = &self.entries[index];
        let response = {
            let mut cursors = self.cursors.lock().expect("script cursor lock");
            let pos = cursors[index].min(entry.responses.len().saturating_sub(1));
            cursors[index] += 1;
            entry.responses.get(pos).cloned().unwrap_or_default()
        };
        match response.strip_prefix("!transport") {
            Some(msg) => Err(BackendError::Transport(msg.trim().to_owned())),
            None => Ok(response),
        }
    }
}

/// JSON-over-HTTP chat-completion client (OpenAI-compatible layout).
///
/// Request: `{"model", "messages": [{"role": "system"}, {"role": "user"}],
/// "temperature", "max_tokens"}`. The reply text is read from
/// `choices[0].message.content`, falling back to a top-level `text` or
/// `content` string. The bearer token comes from [`API_KEY_ENV`].
pub struct HttpChatBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpChatBackend {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url: url.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }

    fn extract_text(body: &Value) -> Option<String> {
        body.pointer("/choices/0/message/content")
            .or_else(|| body.pointer("/choices/0/text"))
            .or_else(|| body.get("text"))
            .or_else(|| body.get("content"))
            .and_then(Value::as_str)
            .map(str::to_owned)
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat(&self, call: &ChatCall<'_>) -> Result<String, BackendError> {
        let payload = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": call.prompt.system},
                {"role": "user", "content": call.prompt.user},
            ],
            "temperature": call.temperature,
            "max_tokens": call.max_tokens,
        });
        let mut req = self
            .client
            .post(&self.url)
            .timeout(call.timeout)
            .json(&payload);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let body: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Response(e.to_string()))?;
        Self::extract_text(&body)
            .ok_or_else(|| BackendError::Response("no completion text in response".into()))
    }
}
