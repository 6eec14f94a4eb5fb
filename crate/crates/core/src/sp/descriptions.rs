use std::collections::HashMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::SpError;
use crate::embed::{Chunking, EmbedError, Embedder, EmbeddingIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermKind {
    Entity,
    Predicate,
}

impl TermKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TermKind::Entity => "entity",
            TermKind::Predicate => "predicate",
        }
    }
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TermKind {
    type Err = SpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entity" => Ok(TermKind::Entity),
            "predicate" => Ok(TermKind::Predicate),
            other => Err(SpError::Config(format!("unknown term kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermEntry {
    pub id: String,
    pub kind: TermKind,
    /// `None` means the description could not be fetched.
    pub description: Option<String>,
}

/// Term descriptions keyed by (kind, id), in insertion order.
#[derive(Debug, Clone, Default)]
pub struct TermCatalog {
    entries: Vec<TermEntry>,
    by_key: HashMap<(TermKind, String), usize>,
}

impl TermCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces.
    pub fn insert(&mut self, id: &str, kind: TermKind, description: Option<String>) {
        let key = (kind, id.to_owned());
        match self.by_key.get(&key) {
            Some(&i) => self.entries[i].description = description,
            None => {
                self.by_key.insert(key, self.entries.len());
                self.entries.push(TermEntry {
                    id: id.to_owned(),
                    kind,
                    description,
                });
            }
        }
    }

    pub fn get(&self, id: &str, kind: TermKind) -> Option<&TermEntry> {
        self.by_key
            .get(&(kind, id.to_owned()))
            .map(|&i| &self.entries[i])
    }

    pub fn description(&self, id: &str, kind: TermKind) -> Option<&str> {
        self.get(id, kind)?.description.as_deref()
    }

    pub fn entries(&self) -> &[TermEntry] {
        &self.entries
    }

    pub fn of_kind(&self, kind: TermKind) -> impl Iterator<Item = &TermEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    pub fn unfetched(&self) -> impl Iterator<Item = &TermEntry> {
        self.entries.iter().filter(|e| e.description.is_none())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads an `id<TAB>kind<TAB>description` cache; later rows win.
    pub fn read_tsv(path: &Path) -> Result<Self, SpError> {
        let mut cat = Self::new();
        if !path.exists() {
            return Ok(cat);
        }
        let file = std::fs::File::open(path).map_err(|e| SpError::io(path, e))?;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| SpError::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (Some(id), Some(kind), Some(desc)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(SpError::Data(format!(
                    "{} line {}: expected id, kind and description",
                    path.display(),
                    n + 1
                )));
            };
            let kind: TermKind = kind.parse()?;
            cat.insert(id, kind, Some(unescape(desc)));
        }
        Ok(cat)
    }

    /// Appends rows for fetched entries.
    pub fn append_tsv(path: &Path, entries: &[TermEntry]) -> Result<(), SpError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| SpError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in entries {
            if let Some(d) = &e.description {
                writeln!(w, "{}\t{}\t{}", e.id, e.kind, escape(d)).map_err(|x| SpError::io(path, x))?;
            }
        }
        w.flush().map_err(|x| SpError::io(path, x))
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\")
        .replace('\t', "\\t")
        .replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some(o) => out.push(o),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub trait DescriptionSource: Send + Sync {
    fn fetch(&self, id: &str, kind: TermKind) -> Result<String, SpError>;
}

/// Fetches `url_template` with `{id}` substituted. Wikidata entity-data JSON
/// is rendered as `label: description`; other JSON uses a top-level
/// `description` string; non-JSON bodies are taken verbatim.
pub struct HttpDescriptionSource {
    client: reqwest::blocking::Client,
    url_template: String,
}

impl HttpDescriptionSource {
    pub fn new(url_template: impl Into<String>, timeout: Duration) -> Result<Self, SpError> {
        let url_template = url_template.into();
        if !url_template.contains("{id}") {
            return Err(SpError::Config(format!(
                "description URL template {url_template:?} has no {{id}} placeholder"
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("kgqa/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| SpError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url_template,
        })
    }

    pub(crate) fn parse_body(id: &str, body: &str) -> Option<String> {
        let Ok(json) = serde_json::from_str::<Value>(body) else {
            let t = body.trim();
            return (!t.is_empty()).then(|| t.to_owned());
        };
        if let Some(entities) = json.get("entities").and_then(Value::as_object) {
            let entity = entities.get(id).or_else(|| entities.values().next())?;
            let label = entity.pointer("/labels/en/value").and_then(Value::as_str);
            let desc = entity
                .pointer("/descriptions/en/value")
                .and_then(Value::as_str);
            return match (label, desc) {
                (Some(l), Some(d)) => Some(format!("{l}: {d}")),
                (Some(x), None) | (None, Some(x)) => Some(x.to_owned()),
                (None, None) => None,
            };
        }
        json.get("description")
            .and_then(Value::as_str)
            .or_else(|| json.as_str())
            .map(str::to_owned)
    }
}

impl DescriptionSource for HttpDescriptionSource {
    fn fetch(&self, id: &str, _kind: TermKind) -> Result<String, SpError> {
        let url = self.url_template.replace("{id}", id);
        let resp = self
            .client
            .get(&url)
            .send()
            .map_err(|e| SpError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| SpError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(SpError::Transport(format!("{url}: HTTP {}", status.as_u16())));
        }
        Self::parse_body(id, &body)
            .filter(|d| !d.is_empty())
            .ok_or_else(|| SpError::Data(format!("{url}: no description in response")))
    }
}

/// Fetches descriptions for every requested id not already in the cache.
/// Failed ids stay in the catalog flagged unfetched and are not cached, so a
/// re-run retries only them. At most `max_parallel` requests are in flight.
pub fn fetch_descriptions(
    ids: &[(String, TermKind)],
    source: &dyn DescriptionSource,
    cache: Option<&Path>,
    max_parallel: usize,
) -> Result<TermCatalog, SpError> {
    let cached = match cache {
        Some(p) => TermCatalog::read_tsv(p)?,
        None => TermCatalog::new(),
    };
    let mut missing: Vec<(String, TermKind)> = Vec::new();
    for (id, kind) in ids {
        if cached.description(id, *kind).is_none() && !missing.contains(&(id.clone(), *kind)) {
            missing.push((id.clone(), *kind));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_parallel.max(1))
        .build()
        .map_err(|e| SpError::Config(e.to_string()))?;
    let fetched: Vec<TermEntry> = pool.install(|| {
        missing
            .par_iter()
            .map(|(id, kind)| TermEntry {
                id: id.clone(),
                kind: *kind,
                description: source.fetch(id, *kind).ok(),
            })
            .collect()
    });
    if let Some(p) = cache {
        TermCatalog::append_tsv(p, &fetched)?;
    }
    let fetched_by: HashMap<(TermKind, &str), &TermEntry> =
        fetched.iter().map(|e| ((e.kind, e.id.as_str()), e)).collect();
    let mut out = TermCatalog::new();
    for (id, kind) in ids {
        let desc = match cached.description(id, *kind) {
            Some(d) => Some(d.to_owned()),
            None => fetched_by
                .get(&(*kind, id.as_str()))
                .and_then(|e| e.description.clone()),
        };
        out.insert(id, *kind, desc);
    }
    Ok(out)
}

/// Retrieval index over the descriptions of one term kind.
#[derive(Debug, Clone)]
pub struct TermIndex {
    kind: TermKind,
    index: EmbeddingIndex,
    descriptions: HashMap<String, String>,
    order: Vec<String>,
}

impl TermIndex {
    /// Unfetched terms are indexed by their id alone.
    pub fn build(
        catalog: &TermCatalog,
        kind: TermKind,
        embedder: &dyn Embedder,
        chunking: Chunking,
    ) -> Result<Self, EmbedError> {
        let mut index = EmbeddingIndex::new(embedder.dim());
        let mut descriptions = HashMap::new();
        let mut order = Vec::new();
        for e in catalog.of_kind(kind) {
            let text = e.description.clone().unwrap_or_else(|| e.id.clone());
            index.add(embedder, &e.id, &text, chunking)?;
            descriptions.insert(e.id.clone(), text);
            order.push(e.id.clone());
        }
        Ok(Self {
            kind,
            index,
            descriptions,
            order,
        })
    }

    pub fn kind(&self) -> TermKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn description(&self, id: &str) -> Option<&str> {
        self.descriptions.get(id).map(String::as_str)
    }

    /// The `k` distinct terms whose best chunk is most similar to `query`.
    /// With `k` at least the catalog size every term is returned.
    pub fn retrieve(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k: usize,
    ) -> Result<Vec<String>, EmbedError> {
        let want = k.min(self.order.len());
        let q = embedder.embed(query)?;
        let mut fetch = want;
        loop {
            let r = self.index.top_k_vector(&q, fetch)?;
            let mut ids: Vec<String> = Vec::new();
            for h in &r.hits {
                let src = &self.index.chunk(h.chunk_id).expect("hit in index").source_id;
                if !ids.contains(src) {
                    ids.push(src.clone());
                }
            }
            if ids.len() >= want || fetch >= self.index.len() {
                ids.truncate(want);
                return Ok(ids);
            }
            fetch = (fetch * 2).max(1);
        }
    }
}
