//! Dataset loaders, answer metrics, and the evaluation harness.

mod datasets;
mod harness;
mod metrics;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use datasets::{load_dataset, metaqa_qtype_path, DatasetTag, LoadedDataset};
pub use harness::{
    evaluate, fill_gold_answers, read_checkpoint, Aggregates, EvalConfig, EvalReport, GoldFill,
    InstanceRecord, Sample,
};
pub use metrics::{answer_key, canonical_number, exact_match, f1, hits_at_1, macro_f1};

/// One dataset question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionInstance {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_entities: Option<Vec<String>>,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sparql: Option<String>,
    pub dataset: DatasetTag,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, String>,
}

impl QuestionInstance {
    /// Scored instances need a question and at least one gold answer.
    pub fn is_evaluable(&self) -> bool {
        !self.question.trim().is_empty() && !self.gold_answers.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: record {record}: field {field:?}: {message}")]
    Schema {
        path: String,
        record: usize,
        field: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("report self-check failed: {0}")]
    Inconsistent(String),
}

impl EvalError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
