//! The interface the evaluation harness drives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::QuestionInstance;
use crate::trace::TraceRecord;

/// Final outcome of answering one question.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerSet {
    /// Entity labels, ids or literals, depending on the strategy.
    pub answers: Vec<String>,
    /// `true` implies `answers` is non-empty.
    pub accepted: bool,
    pub hops_used: usize,
    pub llm_calls: usize,
    pub trace: Vec<TraceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl AnswerSet {
    pub fn accepted(answers: Vec<String>) -> Self {
        debug_assert!(!answers.is_empty());
        Self {
            accepted: !answers.is_empty(),
            answers,
            ..Self::default()
        }
    }

    pub fn rejected(failure: Option<String>) -> Self {
        Self {
            failure,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("instance {id}: {message}")]
    Instance { id: String, message: String },
}

/// Something that can answer a dataset question.
pub trait QaPipeline: Send + Sync {
    fn answer(&self, instance: &QuestionInstance) -> Result<AnswerSet, PipelineError>;
}
