use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use super::{EmbedError, Embedder, EmbeddingIndex};
use crate::llm::FewShotExample;

/// Training examples indexed by question embedding, one chunk per example;
/// chunk id equals the example's position.
#[derive(Debug, Clone)]
pub struct FewShotCorpus {
    examples: Vec<FewShotExample>,
    index: EmbeddingIndex,
}

#[derive(Deserialize)]
struct Row {
    question: String,
    solution: String,
    #[serde(default)]
    source_id: Option<String>,
    #[serde(default)]
    id: Option<String>,
}

impl FewShotCorpus {
    pub fn build(
        embedder: &dyn Embedder,
        examples: Vec<FewShotExample>,
    ) -> Result<Self, EmbedError> {
        let mut index = EmbeddingIndex::new(embedder.dim());
        for ex in &examples {
            let v = embedder.embed(&ex.question)?;
            index.insert(&ex.source_id, &ex.question, v)?;
        }
        Ok(Self { examples, index })
    }

    /// Reconstitutes a corpus from a saved index whose sidecar text rows are
    /// the questions, plus the matching example list.
    pub fn from_parts(
        examples: Vec<FewShotExample>,
        index: EmbeddingIndex,
    ) -> Result<Self, EmbedError> {
        if examples.len() != index.len() {
            return Err(EmbedError::Format {
                path: "few-shot corpus".into(),
                message: format!("{} examples but {} vectors", examples.len(), index.len()),
            });
        }
        Ok(Self { examples, index })
    }

    /// JSONL rows `{"question", "solution", "source_id"?}`; rows with an
    /// empty question or solution are skipped.
    pub fn read_examples(path: &Path) -> Result<Vec<FewShotExample>, EmbedError> {
        let shown = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|source| EmbedError::Io {
            path: shown.clone(),
            source,
        })?;
        let mut out = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| EmbedError::Io {
                path: shown.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line).map_err(|e| EmbedError::Format {
                path: shown.clone(),
                message: format!("line {}: {e}", n + 1),
            })?;
            if row.question.trim().is_empty() || row.solution.trim().is_empty() {
                continue;
            }
            out.push(FewShotExample {
                source_id: row
                    .source_id
                    .or(row.id)
                    .unwrap_or_else(|| format!("ex{}", out.len())),
                question: row.question,
                solution: row.solution,
            });
        }
        Ok(out)
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }

    pub fn index(&self) -> &EmbeddingIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// The `n` examples most similar to `question`, best first, with scores.
    /// Examples whose question equals `question` exactly are skipped.
    pub fn select(
        &self,
        embedder: &dyn Embedder,
        question: &str,
        n: usize,
    ) -> Result<Vec<(FewShotExample, f64)>, EmbedError> {
        if n == 0 || self.is_empty() {
            return Ok(Vec::new());
        }
        let r = self.index.top_k(embedder, question, n + 1)?;
        Ok(r.hits
            .into_iter()
            .map(|h| (&self.examples[h.chunk_id as usize], h.score))
            .filter(|(ex, _)| ex.question != question)
            .take(n)
            .map(|(ex, s)| (ex.clone(), s))
            .collect())
    }
}
