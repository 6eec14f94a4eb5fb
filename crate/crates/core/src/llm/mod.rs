//! Typed LLM skill calls.
//!
//! A [`SkillRequest`] is rendered into a prompt by [`PromptTemplates`], checked
//! against the context window, and sent to a [`ChatBackend`] by the
//! [`LlmGateway`]. The [`ScriptedBackend`] replays canned responses so every
//! pipeline can run deterministically without a model.

mod backend;
mod gateway;
mod parse;
mod prompt;
mod tokens;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    BackendError, ChatBackend, ChatCall, HttpChatBackend, RequestKey, ScriptEntry,
    ScriptedBackend, API_KEY_ENV,
};
pub use gateway::{GatewayConfig, LlmGateway};
pub use parse::{parse_items, strip_list_marker};
pub use prompt::{render_prompt, PromptTemplates, RenderedPrompt, SkillTemplate};
pub use tokens::{estimate_tokens, ByteEstimator, TokenEstimator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkillKind {
    RelationFilter,
    RelationMulti,
    EntityFilter,
    PathPredict,
    EntityIdentify,
    PredicateIdentify,
    SparqlGenerate,
}

impl SkillKind {
    pub const ALL: [SkillKind; 7] = [
        SkillKind::RelationFilter,
        SkillKind::RelationMulti,
        SkillKind::EntityFilter,
        SkillKind::PathPredict,
        SkillKind::EntityIdentify,
        SkillKind::PredicateIdentify,
        SkillKind::SparqlGenerate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SkillKind::RelationFilter => "relation-filter",
            SkillKind::RelationMulti => "relation-multi",
            SkillKind::EntityFilter => "entity-filter",
            SkillKind::PathPredict => "path-predict",
            SkillKind::EntityIdentify => "entity-identify",
            SkillKind::PredicateIdentify => "predicate-identify",
            SkillKind::SparqlGenerate => "sparql-generate",
        }
    }
}

impl fmt::Display for SkillKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SkillKind {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SkillKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| LlmError::Config(format!("unknown skill kind {s:?}")))
    }
}

/// One candidate shown to the model, e.g. a relation or an entity description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    pub id: String,
    pub text: String,
}

impl ContextItem {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// A solved training example placed in the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub question: String,
    /// Answer list, query path or SPARQL depending on the skill. Never empty.
    pub solution: String,
    pub source_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillRequest {
    pub skill: SkillKind,
    pub question: String,
    pub context_items: Vec<ContextItem>,
    pub few_shot: Vec<FewShotExample>,
    pub feedback: Vec<String>,
    /// Requested number of outputs.
    pub k: usize,
}

impl SkillRequest {
    pub fn new(skill: SkillKind, question: impl Into<String>) -> Self {
        Self {
            skill,
            question: question.into(),
            context_items: Vec::new(),
            few_shot: Vec::new(),
            feedback: Vec::new(),
            k: 1,
        }
    }

    pub fn with_context(mut self, items: Vec<ContextItem>) -> Self {
        self.context_items = items;
        self
    }

    pub fn with_few_shot(mut self, examples: Vec<FewShotExample>) -> Self {
        self.few_shot = examples;
        self
    }

    pub fn with_feedback(mut self, feedback: Vec<String>) -> Self {
        self.feedback = feedback;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k.max(1);
        self
    }

    pub fn key(&self) -> RequestKey {
        RequestKey::of(self)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillResponse {
    pub raw_text: String,
    pub parsed_items: Vec<String>,
    pub usage: Usage,
    /// Digest of the rendered prompt, for traces.
    pub prompt_digest: String,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no template for skill {0}")]
    MissingTemplate(SkillKind),
    #[error("prompt needs {estimated} tokens but the window is {window} (over by {overflow})")]
    Budget {
        estimated: usize,
        window: usize,
        overflow: usize,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("configuration: {0}")]
    Config(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Backend(e) if e.is_retryable())
    }
}
