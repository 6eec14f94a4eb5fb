//! In-memory knowledge graph: interned catalogs, bidirectional adjacency
//! indexes, CVT-aware neighborhood expansion, and ingestion of the supported
//! triple file layouts.
//!
//! A loaded [`KnowledgeGraph`] is immutable and `Sync`, so one instance can be
//! shared by concurrently running question pipelines.

mod catalog;
mod graph;
mod load;
mod movie;
mod snapshot;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use catalog::{
    normalize_label, EntityCatalog, EntityId, MatchKind, RelationCatalog, RelationId, Resolved,
};
pub use graph::{CandidateSet, GraphBuilder, KnowledgeGraph, Provenance, Triple};
pub use load::{
    load_graph, load_graph_from_reader, read_catalogs, CvtPolicy, GraphFormat, LoadOptions,
    LoadReport,
};
pub use movie::{build_movie_dictionary, MovieDictionary};
pub use snapshot::{encode_snapshot, read_snapshot, snapshot_digest, write_snapshot};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("read failed: {0}")]
    Read(String),
    #[error("malformed line {line}{}: {content:?}", path.as_ref().map(|p| format!(" of {}", p.display())).unwrap_or_default())]
    Malformed {
        path: Option<PathBuf>,
        line: usize,
        content: String,
    },
    #[error("unknown graph format {0:?}")]
    UnknownFormat(String),
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("invalid snapshot: {0}")]
    Snapshot(String),
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub(crate) fn with_path(self, p: &Path) -> Self {
        match self {
            Self::Malformed {
                path: None,
                line,
                content,
            } => Self::Malformed {
                path: Some(p.to_owned()),
                line,
                content,
            },
            Self::Read(msg) => Self::Read(format!("{}: {msg}", p.display())),
            other => other,
        }
    }
}
