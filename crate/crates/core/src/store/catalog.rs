use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Dense local identifier of an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

/// Dense local identifier of a relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Lowercase + trim, the fallback comparison used for LLM-produced labels.
pub fn normalize_label(s: &str) -> String {
    s.trim().to_lowercase()
}

/// How a label lookup matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchKind {
    Exact,
    Normalized,
    ExternalId,
}

/// A successful catalog lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolved<I> {
    pub id: I,
    pub matched: MatchKind,
}

/// Bidirectional external-id table with optional labels.
///
/// Local ids are assigned densely in insertion order. When several entries
/// share a label, label lookups resolve to the smallest id.
#[derive(Debug, Clone, Default, PartialEq)]
struct LabelTable {
    external: Vec<String>,
    labels: Vec<Option<String>>,
    by_external: HashMap<String, u32>,
    by_label: HashMap<String, u32>,
    by_norm_label: HashMap<String, u32>,
    by_source: HashMap<u64, u32>,
}

impl LabelTable {
    fn len(&self) -> usize {
        self.external.len()
    }

    fn intern(&mut self, external: &str) -> (u32, bool) {
        if let Some(&id) = self.by_external.get(external) {
            return (id, false);
        }
        let id = u32::try_from(self.external.len()).expect("catalog exceeds u32 ids");
        self.external.push(external.to_owned());
        self.labels.push(None);
        self.by_external.insert(external.to_owned(), id);
        (id, true)
    }

    fn set_label(&mut self, id: u32, label: &str) {
        let label = label.to_owned();
        self.by_label.entry(label.clone()).or_insert(id);
        self.by_norm_label.entry(normalize_label(&label)).or_insert(id);
        self.labels[id as usize] = Some(label);
    }

    fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).and_then(|l| l.as_deref())
    }

    fn external(&self, id: u32) -> Option<&str> {
        self.external.get(id as usize).map(String::as_str)
    }

    fn lookup_label(&self, label: &str) -> Option<(u32, MatchKind)> {
        if let Some(&id) = self.by_label.get(label) {
            return Some((id, MatchKind::Exact));
        }
        if let Some(&id) = self.by_norm_label.get(&normalize_label(label)) {
            return Some((id, MatchKind::Normalized));
        }
        self.by_external
            .get(label.trim())
            .map(|&id| (id, MatchKind::ExternalId))
    }
}

/// Entity catalog: local id ↔ external id (MID, QID, name), labels and CVT flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityCatalog {
    table: LabelTable,
    cvt: Vec<bool>,
}

impl EntityCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the id for `external`, inserting an unlabeled entry if new.
    pub fn intern(&mut self, external: &str) -> EntityId {
        let (id, fresh) = self.table.intern(external);
        if fresh {
            self.cvt.push(false);
        }
        EntityId(id)
    }

    /// Interns `external` and uses it as its own label when no label is set.
    pub fn intern_labeled(&mut self, external: &str) -> EntityId {
        let id = self.intern(external);
        if self.table.label(id.0).is_none() {
            self.table.set_label(id.0, external);
        }
        id
    }

    pub fn set_label(&mut self, id: EntityId, label: &str) {
        self.table.set_label(id.0, label);
    }

    pub fn set_cvt(&mut self, id: EntityId, cvt: bool) {
        self.cvt[id.index()] = cvt;
    }

    pub(crate) fn set_source_id(&mut self, source: u64, id: EntityId) {
        self.table.by_source.insert(source, id.0);
    }

    pub(crate) fn source_ids(&self) -> impl Iterator<Item = (u64, EntityId)> + '_ {
        self.table.by_source.iter().map(|(&s, &i)| (s, EntityId(i)))
    }

    pub fn id_of(&self, external: &str) -> Option<EntityId> {
        self.table.by_external.get(external).map(|&i| EntityId(i))
    }

    /// Id under the numbering of an id-coded source file.
    pub fn by_source_id(&self, source: u64) -> Option<EntityId> {
        self.table.by_source.get(&source).map(|&i| EntityId(i))
    }

    pub fn external_id(&self, id: EntityId) -> Option<&str> {
        self.table.external(id.0)
    }

    /// `None` is the explicit "unlabeled" marker (typical for CVT nodes).
    pub fn label(&self, id: EntityId) -> Option<&str> {
        self.table.label(id.0)
    }

    /// Label if present, otherwise the external id.
    pub fn display(&self, id: EntityId) -> &str {
        self.label(id)
            .or_else(|| self.external_id(id))
            .unwrap_or("<unknown>")
    }

    pub fn is_cvt(&self, id: EntityId) -> bool {
        self.cvt.get(id.index()).copied().unwrap_or(false)
    }

    pub fn contains_id(&self, id: EntityId) -> bool {
        id.index() < self.len()
    }

    pub fn lookup_label(&self, label: &str) -> Option<Resolved<EntityId>> {
        self.table.lookup_label(label).map(|(id, matched)| Resolved {
            id: EntityId(id),
            matched,
        })
    }

    /// Resolves a dataset-supplied entity reference: external id, then
    /// id-coded source number, then label.
    pub fn resolve(&self, reference: &str) -> Option<EntityId> {
        let reference = reference.trim();
        if let Some(id) = self.id_of(reference) {
            return Some(id);
        }
        if let Ok(n) = reference.parse::<u64>() {
            if let Some(id) = self.by_source_id(n) {
                return Some(id);
            }
        }
        self.lookup_label(reference).map(|r| r.id)
    }

    pub fn ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.len() as u32).map(EntityId)
    }
}

/// Relation catalog: local id ↔ external id and labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationCatalog {
    table: LabelTable,
}

impl RelationCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn intern(&mut self, external: &str) -> RelationId {
        RelationId(self.table.intern(external).0)
    }

    pub fn intern_labeled(&mut self, external: &str) -> RelationId {
        let id = self.intern(external);
        if self.table.label(id.0).is_none() {
            self.table.set_label(id.0, external);
        }
        id
    }

    pub fn set_label(&mut self, id: RelationId, label: &str) {
        self.table.set_label(id.0, label);
    }

    pub(crate) fn set_source_id(&mut self, source: u64, id: RelationId) {
        self.table.by_source.insert(source, id.0);
    }

    pub(crate) fn source_ids(&self) -> impl Iterator<Item = (u64, RelationId)> + '_ {
        self.table.by_source.iter().map(|(&s, &i)| (s, RelationId(i)))
    }

    pub fn by_source_id(&self, source: u64) -> Option<RelationId> {
        self.table.by_source.get(&source).map(|&i| RelationId(i))
    }

    pub fn id_of(&self, external: &str) -> Option<RelationId> {
        self.table.by_external.get(external).map(|&i| RelationId(i))
    }

    pub fn external_id(&self, id: RelationId) -> Option<&str> {
        self.table.external(id.0)
    }

    pub fn label(&self, id: RelationId) -> Option<&str> {
        self.table.label(id.0)
    }

    pub fn display(&self, id: RelationId) -> &str {
        self.label(id)
            .or_else(|| self.external_id(id))
            .unwrap_or("<unknown>")
    }

    pub fn lookup_label(&self, label: &str) -> Option<Resolved<RelationId>> {
        self.table.lookup_label(label).map(|(id, matched)| Resolved {
            id: RelationId(id),
            matched,
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.len() as u32).map(RelationId)
    }
}
