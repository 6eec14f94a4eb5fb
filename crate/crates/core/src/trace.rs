//! Audit trail of a pipeline run, emitted as line-delimited JSON.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceEvent {
    /// A backend invocation.
    LlmCall,
    /// An LLM output failed validation and feedback was queued.
    Feedback,
    /// The single-relation skill gave up and the multi-relation skill took over.
    Fallback,
    /// Candidates were cut down by retrieval to fit the context window.
    Rag,
    /// A graph or endpoint step without an LLM call.
    Retrieval,
    /// The step failed terminally.
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub skill: String,
    pub event: TraceEvent,
    pub inputs_digest: String,
    pub outputs: Vec<String>,
    /// Number of feedback messages carried by this call.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub feedback: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// Hex SHA-256 prefix used as the inputs digest.
pub fn digest(text: &str) -> String {
    let full = hex::encode(Sha256::digest(text.as_bytes()));
    full[..16].to_owned()
}

pub fn write_jsonl(records: &[TraceRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Records belonging to LLM calls that carried feedback.
pub fn feedback_rounds(records: &[TraceRecord], skill: &str) -> usize {
    records
        .iter()
        .filter(|r| r.event == TraceEvent::LlmCall && r.skill == skill && r.feedback > 0)
        .count()
}
