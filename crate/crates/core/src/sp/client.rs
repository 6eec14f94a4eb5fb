use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::sparql::WD_ENTITY;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EndpointError {
    /// The endpoint rejected the query; `message` is its response body.
    #[error("endpoint returned HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("endpoint timed out")]
    Timeout,
    #[error("endpoint transport failure: {0}")]
    Transport(String),
    #[error("malformed results JSON: {0}")]
    Results(String),
}

impl EndpointError {
    pub fn is_retryable(&self) -> bool {
        match self {
            EndpointError::Timeout | EndpointError::Transport(_) => true,
            EndpointError::Http { status, .. } => *status == 429 || *status >= 500,
            EndpointError::Results(_) => false,
        }
    }

    /// Text handed back to the model as feedback.
    pub fn feedback_text(&self) -> String {
        match self {
            EndpointError::Http { message, .. } => message.clone(),
            other => other.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Iri,
    Literal,
    Boolean,
    Number,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingValue {
    pub kind: ValueKind,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datatype: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

impl BindingValue {
    /// Answer text: Wikidata entity IRIs shorten to their Q-id, numbers are
    /// canonicalized, everything else is the raw value.
    pub fn project(&self) -> String {
        match self.kind {
            ValueKind::Iri => self
                .value
                .strip_prefix(WD_ENTITY)
                .unwrap_or(&self.value)
                .to_owned(),
            ValueKind::Number => crate::eval::canonical_number(&self.value),
            _ => self.value.clone(),
        }
    }
}

/// Parsed SPARQL results. ASK results have the single variable `boolean`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingSet {
    pub vars: Vec<String>,
    pub rows: Vec<BTreeMap<String, BindingValue>>,
}

const NUMERIC_TYPES: &[&str] = &[
    "integer",
    "decimal",
    "double",
    "float",
    "int",
    "long",
    "short",
    "byte",
    "nonNegativeInteger",
    "positiveInteger",
    "negativeInteger",
    "nonPositiveInteger",
    "unsignedInt",
    "unsignedLong",
];

impl BindingSet {
    pub fn boolean(value: bool) -> Self {
        let mut row = BTreeMap::new();
        row.insert(
            "boolean".to_owned(),
            BindingValue {
                kind: ValueKind::Boolean,
                value: value.to_string(),
                datatype: None,
                lang: None,
            },
        );
        Self {
            vars: vec!["boolean".to_owned()],
            rows: vec![row],
        }
    }

    /// Standard SPARQL 1.1 results JSON.
    pub fn from_json(text: &str) -> Result<Self, EndpointError> {
        let bad = |m: &str| EndpointError::Results(m.to_owned());
        let root: Value = serde_json::from_str(text).map_err(|e| bad(&e.to_string()))?;
        if let Some(b) = root.get("boolean") {
            return b
                .as_bool()
                .map(Self::boolean)
                .ok_or_else(|| bad("`boolean` is not a JSON boolean"));
        }
        let vars: Vec<String> = root
            .pointer("/head/vars")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing head.vars"))?
            .iter()
            .map(|v| v.as_str().map(str::to_owned).ok_or_else(|| bad("non-string variable name")))
            .collect::<Result<_, _>>()?;
        let bindings = root
            .pointer("/results/bindings")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing results.bindings"))?;
        let mut rows = Vec::with_capacity(bindings.len());
        for b in bindings {
            let obj = b.as_object().ok_or_else(|| bad("binding row is not an object"))?;
            let mut row = BTreeMap::new();
            for (var, cell) in obj {
                if !vars.contains(var) {
                    return Err(bad(&format!("binding for undeclared variable {var:?}")));
                }
                row.insert(var.clone(), parse_cell(cell)?);
            }
            rows.push(row);
        }
        Ok(Self { vars, rows })
    }

    /// Projected values in row order, then variable order, deduplicated.
    pub fn answers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for row in &self.rows {
            for var in &self.vars {
                if let Some(v) = row.get(var) {
                    let p = v.project();
                    if !out.contains(&p) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }
}

fn parse_cell(cell: &Value) -> Result<BindingValue, EndpointError> {
    let bad = |m: &str| EndpointError::Results(m.to_owned());
    let ty = cell
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("binding without type"))?;
    let value = cell
        .get("value")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("binding without value"))?
        .to_owned();
    let datatype = cell
        .get("datatype")
        .and_then(Value::as_str)
        .map(str::to_owned);
    let lang = cell
        .get("xml:lang")
        .and_then(Value::as_str)
        .map(str::to_owned);
    let kind = match ty {
        "uri" | "bnode" => ValueKind::Iri,
        "literal" | "typed-literal" => {
            let local = datatype
                .as_deref()
                .and_then(|d| d.strip_prefix("http://www.w3.org/2001/XMLSchema#"));
            match local {
                Some("boolean") => ValueKind::Boolean,
                Some(t) if NUMERIC_TYPES.contains(&t) => ValueKind::Number,
                _ => ValueKind::Literal,
            }
        }
        other => return Err(bad(&format!("unknown binding type {other:?}"))),
    };
    Ok(BindingValue {
        kind,
        value,
        datatype,
        lang,
    })
}

pub trait SparqlEndpoint: Send + Sync {
    fn execute(&self, query: &str) -> Result<BindingSet, EndpointError>;
}

/// SPARQL protocol client: form-encoded POST, JSON results.
pub struct HttpSparqlEndpoint {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpSparqlEndpoint {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, EndpointError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("kgqa/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| EndpointError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url: url.into(),
        })
    }
}

impl SparqlEndpoint for HttpSparqlEndpoint {
    fn execute(&self, query: &str) -> Result<BindingSet, EndpointError> {
        let resp = self
            .client
            .post(&self.url)
            .header("Accept", "application/sparql-results+json")
            .form(&[("query", query)])
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    EndpointError::Timeout
                } else {
                    EndpointError::Transport(e.to_string())
                }
            })?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| EndpointError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(EndpointError::Http {
                status: status.as_u16(),
                message: body,
            });
        }
        BindingSet::from_json(&body)
    }
}

/// Collapses whitespace runs to one space; the mock endpoint's key.
pub fn normalize_query(query: &str) -> String {
    query.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockError {
    pub status: u16,
    pub message: String,
}

/// One fixture line: `{"query", "results"}` or `{"query", "error"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockFixture {
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<MockError>,
}

/// Fixture-driven endpoint. Unknown queries get HTTP 400.
#[derive(Debug, Default)]
pub struct MockSparqlEndpoint {
    fixtures: HashMap<String, Result<String, MockError>>,
    executions: AtomicUsize,
    log: Mutex<Vec<String>>,
}

impl MockSparqlEndpoint {
    pub fn new(fixtures: Vec<MockFixture>) -> Self {
        let mut map = HashMap::new();
        for f in fixtures {
            let outcome = match (f.results, f.error) {
                (_, Some(err)) => Err(err),
                (Some(results), None) => Ok(results.to_string()),
                (None, None) => Ok(r#"{"head":{"vars":[]},"results":{"bindings":[]}}"#.to_owned()),
            };
            map.insert(normalize_query(&f.query), outcome);
        }
        Self {
            fixtures: map,
            executions: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn from_jsonl(path: &Path) -> Result<Self, EndpointError> {
        let file = std::fs::File::open(path)
            .map_err(|e| EndpointError::Transport(format!("{}: {e}", path.display())))?;
        let mut fixtures = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| EndpointError::Transport(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            fixtures.push(serde_json::from_str(&line).map_err(|e| {
                EndpointError::Results(format!("{} line {}: {e}", path.display(), n + 1))
            })?);
        }
        Ok(Self::new(fixtures))
    }

    pub fn executions(&self) -> usize {
        self.executions.load(Ordering::SeqCst)
    }

    pub fn executed(&self) -> Vec<String> {
        self.log.lock().expect("mock log lock").clone()
    }
}

impl SparqlEndpoint for MockSparqlEndpoint {
    fn execute(&self, query: &str) -> Result<BindingSet, EndpointError> {
        self.executions.fetch_add(1, Ordering::SeqCst);
        self.log.lock().expect("mock log lock").push(query.to_owned());
        match self.fixtures.get(&normalize_query(query)) {
            Some(Ok(json)) => BindingSet::from_json(json),
            Some(Err(e)) => Err(EndpointError::Http {
                status: e.status,
                message: e.message.clone(),
            }),
            None => Err(EndpointError::Http {
                status: 400,
                message: "mock endpoint: no fixture for this query".into(),
            }),
        }
    }
}
