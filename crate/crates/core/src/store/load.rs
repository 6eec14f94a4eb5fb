//! Graph ingestion.
//!
//! Supported layouts:
//!
//! - `tsv`: `head<TAB>relation<TAB>tail`; a line without tabs is split on
//!   whitespace and must then have exactly three fields.
//! - `pipe`: MetaQA `kb.txt` lines, `head|relation|tail`.
//! - `ntriples`: W3C N-Triples; `rdfs:label` triples with a literal object set
//!   the subject's label instead of becoming edges.
//! - `id-coded`: `h<TAB>r<TAB>t` integer lines with sidecar catalogs
//!   `id<TAB>external-id<TAB>label<TAB>is_cvt` for entities and relations.
//!
//! Blank lines and lines starting with `#` are ignored by the line formats.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use oxrdf::{NamedOrBlankNode, Term};
use oxttl::NTriplesParser;

use super::catalog::{EntityCatalog, EntityId, RelationCatalog};
use super::graph::{GraphBuilder, KnowledgeGraph, Triple};
use super::StoreError;

const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphFormat {
    Tsv,
    Pipe,
    NTriples,
    IdCoded {
        entities: PathBuf,
        relations: PathBuf,
    },
}

impl FromStr for GraphFormat {
    type Err = StoreError;

    /// Parses the line formats; `id-coded` needs catalog paths and is built
    /// with [`GraphFormat::IdCoded`] directly.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(Self::Tsv),
            "pipe" | "metaqa" => Ok(Self::Pipe),
            "ntriples" | "n-triples" | "nt" => Ok(Self::NTriples),
            other => Err(StoreError::UnknownFormat(other.to_owned())),
        }
    }
}

/// How CVT mediator nodes are recognized.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CvtPolicy {
    /// External ids flagged as CVT regardless of the catalog column.
    pub ids: HashSet<String>,
    /// Flag every entity that ends up without a label.
    pub unlabeled_is_cvt: bool,
}

impl CvtPolicy {
    /// Reads one external id per line.
    pub fn from_id_file(path: &Path) -> Result<Self, StoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        Ok(Self {
            ids: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_owned)
                .collect(),
            unlabeled_is_cvt: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub format: GraphFormat,
    /// Fail on the first malformed line instead of counting and skipping it.
    pub strict: bool,
    pub cvt: CvtPolicy,
}

impl LoadOptions {
    pub fn new(format: GraphFormat) -> Self {
        Self {
            format,
            strict: false,
            cvt: CvtPolicy::default(),
        }
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn with_cvt(mut self, cvt: CvtPolicy) -> Self {
        self.cvt = cvt;
        self
    }
}

/// Summary emitted after ingestion, rendered as `key=value` lines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub triples: usize,
    pub entities: usize,
    pub relations: usize,
    pub cvt_entities: usize,
    pub malformed: usize,
    pub duplicates: usize,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "triples={}", self.triples)?;
        writeln!(f, "entities={}", self.entities)?;
        writeln!(f, "relations={}", self.relations)?;
        writeln!(f, "cvt_entities={}", self.cvt_entities)?;
        writeln!(f, "malformed={}", self.malformed)?;
        writeln!(f, "duplicates={}", self.duplicates)
    }
}

pub fn load_graph(
    path: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<(KnowledgeGraph, LoadReport), StoreError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
    load_graph_from_reader(file, options).map_err(|e| e.with_path(path))
}

pub fn load_graph_from_reader(
    reader: impl Read,
    options: &LoadOptions,
) -> Result<(KnowledgeGraph, LoadReport), StoreError> {
    let mut builder = match &options.format {
        GraphFormat::IdCoded {
            entities,
            relations,
        } => {
            let (ents, rels) = read_catalogs(entities, relations)?;
            GraphBuilder::with_catalogs(ents, rels)
        }
        GraphFormat::NTriples => GraphBuilder::unlabeled(),
        GraphFormat::Tsv | GraphFormat::Pipe => GraphBuilder::labeled(),
    };

    let mut malformed = 0usize;
    let reader = BufReader::new(reader);
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| StoreError::Read(e.to_string()))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let ok = match &options.format {
            GraphFormat::Tsv => parse_tsv(trimmed).map(|(h, r, t)| {
                builder.add(h, r, t);
            }),
            GraphFormat::Pipe => parse_pipe(trimmed).map(|(h, r, t)| {
                builder.add(h, r, t);
            }),
            GraphFormat::NTriples => parse_ntriples_line(trimmed, &mut builder),
            GraphFormat::IdCoded { .. } => parse_id_coded(trimmed, &builder).map(|t| {
                builder.add_ids(t);
            }),
        };
        if ok.is_none() {
            if options.strict {
                return Err(StoreError::Malformed {
                    path: None,
                    line: index + 1,
                    content: trimmed.chars().take(200).collect(),
                });
            }
            malformed += 1;
        }
    }

    for id in &options.cvt.ids {
        if let Some(e) = builder.entities().id_of(id) {
            builder.entities_mut().set_cvt(e, true);
        }
    }
    if options.cvt.unlabeled_is_cvt {
        let unlabeled: Vec<EntityId> = builder
            .entities()
            .ids()
            .filter(|&e| builder.entities().label(e).is_none())
            .collect();
        for e in unlabeled {
            builder.entities_mut().set_cvt(e, true);
        }
    }

    let pending = builder.pending_triples();
    let graph = builder.build();
    let report = LoadReport {
        triples: graph.triples().len(),
        entities: graph.entities().len(),
        relations: graph.relations().len(),
        cvt_entities: graph
            .entities()
            .ids()
            .filter(|&e| graph.entities().is_cvt(e))
            .count(),
        malformed,
        duplicates: pending - graph.triples().len(),
    };
    Ok((graph, report))
}

fn parse_tsv(line: &str) -> Option<(&str, &str, &str)> {
    if line.contains('\t') {
        let mut parts = line.split('\t');
        let (h, r, t) = (parts.next()?, parts.next()?, parts.next()?);
        if parts.next().is_some() || h.is_empty() || r.is_empty() || t.is_empty() {
            return None;
        }
        Some((h, r, t))
    } else {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [h, r, t] => Some((h, r, t)),
            _ => None,
        }
    }
}

fn parse_pipe(line: &str) -> Option<(&str, &str, &str)> {
    let mut parts = line.splitn(3, '|');
    let (h, r, t) = (parts.next()?, parts.next()?, parts.next()?);
    let (h, r, t) = (h.trim(), r.trim(), t.trim());
    if h.is_empty() || r.is_empty() || t.is_empty() {
        return None;
    }
    Some((h, r, t))
}

fn parse_ntriples_line(line: &str, builder: &mut GraphBuilder) -> Option<()> {
    let mut parser = NTriplesParser::new().for_slice(line.as_bytes());
    let triple = parser.next()?.ok()?;
    if parser.next().is_some() {
        return None;
    }
    let subject = match &triple.subject {
        NamedOrBlankNode::NamedNode(n) => n.as_str().to_owned(),
        NamedOrBlankNode::BlankNode(b) => format!("_:{}", b.as_str()),
    };
    let predicate = triple.predicate.as_str();
    let (object, literal_label) = match &triple.object {
        Term::NamedNode(n) => (n.as_str().to_owned(), None),
        Term::BlankNode(b) => (format!("_:{}", b.as_str()), None),
        Term::Literal(l) => (l.value().to_owned(), Some(l.value().to_owned())),
        #[allow(unreachable_patterns)]
        _ => return None,
    };
    if predicate == RDFS_LABEL {
        if let Some(label) = literal_label {
            let id = builder.entity(&subject);
            builder.entities_mut().set_label(id, &label);
            return Some(());
        }
    }
    let h = builder.entity(&subject);
    let r = builder.relation(predicate);
    let t = builder.entity(&object);
    if literal_label.is_some() && builder.entities().label(t).is_none() {
        builder.entities_mut().set_label(t, &object);
    }
    builder.add_ids(Triple::new(h, r, t));
    Some(())
}

fn parse_id_coded(line: &str, builder: &GraphBuilder) -> Option<Triple> {
    let mut parts = line.split(['\t', ' ']).filter(|p| !p.is_empty());
    let h: u64 = parts.next()?.parse().ok()?;
    let r: u64 = parts.next()?.parse().ok()?;
    let t: u64 = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some(Triple::new(
        builder.entities().by_source_id(h)?,
        builder.relations().by_source_id(r)?,
        builder.entities().by_source_id(t)?,
    ))
}

struct CatalogRow {
    source: u64,
    external: String,
    label: Option<String>,
    cvt: bool,
}

fn read_catalog_rows(path: &Path) -> Result<Vec<CatalogRow>, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || StoreError::Malformed {
            path: Some(path.to_owned()),
            line: i + 1,
            content: line.chars().take(200).collect(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(bad());
        }
        let source = fields[0].trim().parse::<u64>().map_err(|_| bad())?;
        let label = fields
            .get(2)
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .map(str::to_owned);
        let cvt = match fields.get(3).map(|c| c.trim()) {
            None | Some("") | Some("0") | Some("false") => false,
            Some("1") | Some("true") => true,
            Some(_) => return Err(bad()),
        };
        rows.push(CatalogRow {
            source,
            external: fields[1].trim().to_owned(),
            label,
            cvt,
        });
    }
    Ok(rows)
}

/// Reads the sidecar catalogs of the id-coded format.
pub fn read_catalogs(
    entities: &Path,
    relations: &Path,
) -> Result<(EntityCatalog, RelationCatalog), StoreError> {
    let mut ents = EntityCatalog::new();
    for row in read_catalog_rows(entities)? {
        let id = ents.intern(&row.external);
        ents.set_source_id(row.source, id);
        if let Some(label) = &row.label {
            ents.set_label(id, label);
        }
        ents.set_cvt(id, row.cvt);
    }
    let mut rels = RelationCatalog::new();
    for row in read_catalog_rows(relations)? {
        let id = rels.intern(&row.external);
        rels.set_source_id(row.source, id);
        if let Some(label) = &row.label {
            rels.set_label(id, label);
        }
    }
    Ok((ents, rels))
}
