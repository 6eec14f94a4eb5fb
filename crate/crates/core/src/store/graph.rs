use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::catalog::{EntityCatalog, EntityId, RelationCatalog, RelationId, Resolved};

/// A `(head, relation, tail)` edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Compressed adjacency lists: `edges[offsets[e]..offsets[e + 1]]` are the
/// `(relation, neighbor)` pairs of entity `e`, in source-file order.
#[derive(Debug, Clone, Default, PartialEq)]
struct Adjacency {
    offsets: Vec<usize>,
    edges: Vec<(RelationId, EntityId)>,
}

impl Adjacency {
    fn build(
        entity_count: usize,
        triples: &[Triple],
        key: impl Fn(&Triple) -> (EntityId, RelationId, EntityId),
    ) -> Self {
        let mut offsets = vec![0usize; entity_count + 1];
        for t in triples {
            offsets[key(t).0.index() + 1] += 1;
        }
        for i in 0..entity_count {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut edges = vec![(RelationId(0), EntityId(0)); triples.len()];
        for t in triples {
            let (from, rel, to) = key(t);
            let slot = &mut cursor[from.index()];
            edges[*slot] = (rel, to);
            *slot += 1;
        }
        Self { offsets, edges }
    }

    fn of(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        match (self.offsets.get(e.index()), self.offsets.get(e.index() + 1)) {
            (Some(&lo), Some(&hi)) => &self.edges[lo..hi],
            _ => &[],
        }
    }
}

/// How a candidate was reached from the previous frontier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub from: EntityId,
    /// One relation for a direct edge, two when the path went through a CVT.
    pub relations: Vec<RelationId>,
    pub via_cvt: Option<EntityId>,
}

/// The frontier produced by one expansion step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    /// Sorted by local id, no duplicates.
    pub entities: Vec<EntityId>,
    pub hop: usize,
    pub provenance: BTreeMap<EntityId, Vec<Provenance>>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }
}

/// Immutable in-memory knowledge graph.
///
/// Edges are treated as bidirectional for neighborhood queries, so every
/// triple is present in both the forward (head → tail) and reverse
/// (tail → head) index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    entities: EntityCatalog,
    relations: RelationCatalog,
    forward: Adjacency,
    reverse: Adjacency,
}

impl KnowledgeGraph {
    /// Builds the indexes. Duplicate triples are kept once, at their first
    /// position.
    pub fn from_parts(
        entities: EntityCatalog,
        relations: RelationCatalog,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Self {
        let mut seen = HashSet::new();
        let triples: Vec<Triple> = triples.into_iter().filter(|t| seen.insert(*t)).collect();
        let n = entities.len();
        let forward = Adjacency::build(n, &triples, |t| (t.head, t.relation, t.tail));
        let reverse = Adjacency::build(n, &triples, |t| (t.tail, t.relation, t.head));
        Self {
            triples,
            entities,
            relations,
            forward,
            reverse,
        }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entities(&self) -> &EntityCatalog {
        &self.entities
    }

    pub fn relations(&self) -> &RelationCatalog {
        &self.relations
    }

    /// Outgoing `(relation, tail)` edges of `e` in source order.
    pub fn outgoing(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.forward.of(e)
    }

    /// Incoming `(relation, head)` edges of `e` in source order.
    pub fn incoming(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.reverse.of(e)
    }

    fn incident(&self, e: EntityId) -> impl Iterator<Item = &(RelationId, EntityId)> {
        self.outgoing(e).iter().chain(self.incoming(e))
    }

    /// Every relation on an edge touching the frontier, in either direction,
    /// sorted ascending.
    pub fn one_hop_relations(&self, frontier: &[EntityId]) -> Vec<RelationId> {
        let mut rels: Vec<RelationId> = frontier
            .iter()
            .flat_map(|&e| self.incident(e).map(|&(r, _)| r))
            .collect();
        rels.sort_unstable();
        rels.dedup();
        rels
    }

    /// Entities one edge away from the frontier over any of `relations`.
    ///
    /// With `expand_cvt`, a reached CVT node is replaced by all of its own
    /// neighbors except the frontier entity it was reached from; CVT
    /// neighbors of a CVT are dropped, so no CVT node is ever returned.
    pub fn one_hop_entities(
        &self,
        frontier: &[EntityId],
        relations: &[RelationId],
        expand_cvt: bool,
    ) -> CandidateSet {
        let mut wanted = relations.to_vec();
        wanted.sort_unstable();
        wanted.dedup();
        let mut provenance: BTreeMap<EntityId, Vec<Provenance>> = BTreeMap::new();
        let mut visited_from = HashSet::new();

        for &from in frontier {
            if !visited_from.insert(from) {
                continue;
            }
            for &(rel, next) in self.incident(from) {
                if wanted.binary_search(&rel).is_err() {
                    continue;
                }
                if expand_cvt && self.entities.is_cvt(next) {
                    for &(rel2, beyond) in self.incident(next) {
                        if beyond == from || self.entities.is_cvt(beyond) {
                            continue;
                        }
                        push_provenance(
                            &mut provenance,
                            beyond,
                            Provenance {
                                from,
                                relations: vec![rel, rel2],
                                via_cvt: Some(next),
                            },
                        );
                    }
                } else {
                    push_provenance(
                        &mut provenance,
                        next,
                        Provenance {
                            from,
                            relations: vec![rel],
                            via_cvt: None,
                        },
                    );
                }
            }
        }

        CandidateSet {
            entities: provenance.keys().copied().collect(),
            hop: 0,
            provenance,
        }
    }

    /// Resolves an LLM-produced relation label.
    pub fn contains_relation(&self, label: &str) -> Option<Resolved<RelationId>> {
        self.relations.lookup_label(label)
    }

    /// Resolves an LLM-produced entity label.
    pub fn contains_entity(&self, label: &str) -> Option<Resolved<EntityId>> {
        self.entities.lookup_label(label)
    }
}

fn push_provenance(
    map: &mut BTreeMap<EntityId, Vec<Provenance>>,
    entity: EntityId,
    p: Provenance,
) {
    let list = map.entry(entity).or_default();
    if !list.contains(&p) {
        list.push(p);
    }
}

/// Incremental construction from external identifiers.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: EntityCatalog,
    relations: RelationCatalog,
    triples: Vec<Triple>,
    label_from_external: bool,
}

impl GraphBuilder {
    /// Builder whose entities and relations are labeled by their external id
    /// (the MetaQA / plain TSV convention).
    pub fn labeled() -> Self {
        Self {
            label_from_external: true,
            ..Self::default()
        }
    }

    pub fn unlabeled() -> Self {
        Self::default()
    }

    pub fn with_catalogs(entities: EntityCatalog, relations: RelationCatalog) -> Self {
        Self {
            entities,
            relations,
            triples: Vec::new(),
            label_from_external: false,
        }
    }

    pub fn entity(&mut self, external: &str) -> EntityId {
        if self.label_from_external {
            self.entities.intern_labeled(external)
        } else {
            self.entities.intern(external)
        }
    }

    pub fn relation(&mut self, external: &str) -> RelationId {
        if self.label_from_external {
            self.relations.intern_labeled(external)
        } else {
            self.relations.intern(external)
        }
    }

    pub fn add(&mut self, head: &str, relation: &str, tail: &str) -> Triple {
        let t = Triple::new(self.entity(head), self.relation(relation), self.entity(tail));
        self.triples.push(t);
        t
    }

    pub fn add_ids(&mut self, triple: Triple) {
        self.triples.push(triple);
    }

    pub fn entities_mut(&mut self) -> &mut EntityCatalog {
        &mut self.entities
    }

    pub fn entities(&self) -> &EntityCatalog {
        &self.entities
    }

    pub fn relations(&self) -> &RelationCatalog {
        &self.relations
    }

    pub fn mark_cvt(&mut self, external: &str) {
        let id = self.entity(external);
        self.entities.set_cvt(id, true);
    }

    pub fn pending_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn build(self) -> KnowledgeGraph {
        KnowledgeGraph::from_parts(self.entities, self.relations, self.triples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(g: &KnowledgeGraph, names: &[&str]) -> Vec<EntityId> {
        names
            .iter()
            .map(|n| g.entities().id_of(n).unwrap())
            .collect()
    }

    fn rel(g: &KnowledgeGraph, name: &str) -> RelationId {
        g.relations().id_of(name).unwrap()
    }

    #[test]
    fn relations_are_found_from_both_ends() {
        let mut b = GraphBuilder::labeled();
        b.add("a", "r", "b");
        let g = b.build();
        let r = rel(&g, "r");
        assert_eq!(g.one_hop_relations(&ids(&g, &["a"])), vec![r]);
        assert_eq!(g.one_hop_relations(&ids(&g, &["b"])), vec![r]);
        assert!(g.one_hop_relations(&[]).is_empty());
    }

    #[test]
    fn entities_follow_selected_relations() {
        let mut b = GraphBuilder::labeled();
        b.add("a", "r", "b");
        b.add("a", "s", "c");
        let g = b.build();
        let got = g.one_hop_entities(&ids(&g, &["a"]), &[rel(&g, "r")], false);
        assert_eq!(got.entities, ids(&g, &["b"]));
        let back = g.one_hop_entities(&ids(&g, &["b"]), &[rel(&g, "r")], false);
        assert_eq!(back.entities, ids(&g, &["a"]));
    }

    #[test]
    fn cvt_nodes_are_expanded_through() {
        let mut b = GraphBuilder::labeled();
        b.add("a", "r", "c");
        b.add("c", "s", "b");
        b.mark_cvt("c");
        let g = b.build();
        let a = ids(&g, &["a"]);
        let expanded = g.one_hop_entities(&a, &[rel(&g, "r")], true);
        assert_eq!(expanded.entities, ids(&g, &["b"]));
        let p = &expanded.provenance[&ids(&g, &["b"])[0]][0];
        assert_eq!(p.via_cvt, Some(ids(&g, &["c"])[0]));
        assert_eq!(p.relations, vec![rel(&g, "r"), rel(&g, "s")]);

        let plain = g.one_hop_entities(&a, &[rel(&g, "r")], false);
        assert_eq!(plain.entities, ids(&g, &["c"]));
    }

    #[test]
    fn cvt_neighbors_of_cvt_are_dropped() {
        let mut b = GraphBuilder::labeled();
        b.add("a", "r", "c1");
        b.add("c1", "s", "c2");
        b.add("c1", "t", "x");
        b.mark_cvt("c1");
        b.mark_cvt("c2");
        let g = b.build();
        let got = g.one_hop_entities(&ids(&g, &["a"]), &[rel(&g, "r")], true);
        assert_eq!(got.entities, ids(&g, &["x"]));
    }

    #[test]
    fn duplicate_triples_are_kept_once() {
        let mut b = GraphBuilder::labeled();
        b.add("a", "r", "b");
        b.add("a", "r", "b");
        let g = b.build();
        assert_eq!(g.triples().len(), 1);
        assert_eq!(g.outgoing(ids(&g, &["a"])[0]).len(), 1);
    }

    #[test]
    fn contains_uses_normalized_fallback() {
        let mut b = GraphBuilder::labeled();
        b.add("Kismet", "directed_by", "William Dieterle");
        let g = b.build();
        let exact = g.contains_relation("directed_by").unwrap();
        assert_eq!(exact.id, rel(&g, "directed_by"));
        let fuzzy = g.contains_relation("Directed_By").unwrap();
        assert_eq!(fuzzy.id, rel(&g, "directed_by"));
        assert!(g.contains_relation("no_such_relation").is_none());
        assert!(g.contains_entity("william dieterle").is_some());
    }
}
