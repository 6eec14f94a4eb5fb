use std::time::Duration;

use serde_json::{json, Value};

use super::{EmbedError, EmbeddingVector};

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    /// Deterministic per embedder. Empty text yields the zero vector.
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// Seeded feature-hashing embedder: lowercase word unigrams plus character
/// trigrams of each padded word, signed-hashed into `dim` buckets and
/// L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    fn hash(&self, feature: &[u8]) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for &b in feature {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
        // final avalanche so low bits depend on every byte
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^ (h >> 33)
    }

    fn accumulate(&self, out: &mut [f64], feature: &[u8], weight: f64) {
        let h = self.hash(feature);
        let bucket = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        out[bucket] += sign * weight;
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(256, 0)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut values = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        for word in lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
        {
            self.accumulate(&mut values, word.as_bytes(), 1.0);
            let padded: Vec<char> = std::iter::once('#')
                .chain(word.chars())
                .chain(std::iter::once('#'))
                .collect();
            for tri in padded.windows(3) {
                let s: String = tri.iter().collect();
                let mut key = Vec::with_capacity(s.len() + 1);
                key.push(0x1f);
                key.extend_from_slice(s.as_bytes());
                self.accumulate(&mut values, &key, 0.5);
            }
        }
        let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            for v in &mut values {
                *v /= n;
            }
        }
        EmbeddingVector::new(values)
    }
}

/// JSON-over-HTTP embedding client.
///
/// Posts `{"input": text, "model": model}` and accepts a bare float array,
/// `{"embedding": [...]}` or `{"data": [{"embedding": [...]}]}`.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        dim: usize,
        timeout: Duration,
    ) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url: url.into(),
            model: model.into(),
            dim,
        })
    }

    pub(crate) fn parse_vector(body: &Value) -> Option<Vec<f64>> {
        let arr = body
            .as_array()
            .or_else(|| body.get("embedding").and_then(Value::as_array))
            .or_else(|| body.pointer("/data/0/embedding").and_then(Value::as_array))?;
        arr.iter().map(Value::as_f64).collect()
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Ok(EmbeddingVector::zeros(self.dim));
        }
        let mut req = self
            .client
            .post(&self.url)
            .json(&json!({"input": text, "model": self.model}));
        if let Ok(key) = std::env::var(crate::llm::API_KEY_ENV) {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(EmbedError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let json: Value =
            serde_json::from_str(&body).map_err(|e| EmbedError::Response(e.to_string()))?;
        let values = Self::parse_vector(&json)
            .ok_or_else(|| EmbedError::Response("no float array in response".into()))?;
        if values.len() != self.dim {
            return Err(EmbedError::Dimension {
                expected: self.dim,
                got: values.len(),
            });
        }
        EmbeddingVector::new(values)
    }
}
