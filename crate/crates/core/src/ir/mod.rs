//! Iterative retrieval: expand from the topic entities one hop at a time,
//! letting the model pick relations and then decide whether any reached entity
//! answers the question.

mod metaqa;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

pub use metaqa::{
    majority_path, traverse_path, Category, MetaqaEngine, PathCatalog, PathStep, PathStrategy,
    QueryPath,
};

use crate::embed::{EmbedError, Embedder, EmbeddingIndex, FewShotCorpus};
use crate::eval::QuestionInstance;
use crate::llm::{ContextItem, FewShotExample, LlmError, LlmGateway, SkillKind, SkillRequest, SkillResponse};
use crate::pipeline::{AnswerSet, PipelineError, QaPipeline};
use crate::store::{normalize_label, CandidateSet, EntityId, KnowledgeGraph, RelationId};
use crate::trace::{digest, TraceEvent, TraceRecord};

#[derive(Debug, Error)]
pub enum IrError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("unknown topic entity {0:?}")]
    UnknownTopic(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("{skill}: {message}")]
    Skill {
        skill: SkillKind,
        message: String,
        last_raw: String,
    },
}

#[derive(Debug, Clone)]
pub struct IrConfig {
    /// Relations kept by the single-relation filter.
    pub k: usize,
    pub max_hops: usize,
    /// Feedback retries per skill call.
    pub retries: usize,
    pub few_shot_n: usize,
    /// Attach examples from the first call instead of after the first
    /// validation failure.
    pub always_few_shot: bool,
}

impl Default for IrConfig {
    fn default() -> Self {
        Self {
            k: 1,
            max_hops: 4,
            retries: 2,
            few_shot_n: 5,
            always_few_shot: false,
        }
    }
}

impl IrConfig {
    /// Upper bound on LLM calls for one question.
    pub fn max_llm_calls(&self) -> usize {
        2 * self.max_hops * (1 + self.retries)
    }
}

/// The anchors a run starts from. Never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicEntities(Vec<EntityId>);

impl TopicEntities {
    pub fn new(mut ids: Vec<EntityId>) -> Result<Self, IrError> {
        ids.dedup();
        if ids.is_empty() {
            return Err(IrError::Config("no topic entities".into()));
        }
        Ok(Self(ids))
    }

    /// Resolves dataset references (external ids or labels) against the graph.
    pub fn resolve(graph: &KnowledgeGraph, refs: &[String]) -> Result<Self, IrError> {
        let mut ids = Vec::new();
        for r in refs {
            let id = graph
                .entities()
                .resolve(r)
                .ok_or_else(|| IrError::UnknownTopic(r.clone()))?;
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        Self::new(ids)
    }

    pub fn ids(&self) -> &[EntityId] {
        &self.0
    }
}

/// Outcome of the entity filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Answer(Vec<String>),
    Continue,
}

const SENTINELS: [&str; 5] = ["none", "none of these", "none of them", "continue", "no answer"];

const STEPS_PER_HOP: usize = 4;

#[derive(Default)]
struct Run {
    trace: Vec<TraceRecord>,
    llm_calls: usize,
    examples_on: bool,
}

impl Run {
    fn record(&mut self, step: usize, skill: SkillKind, event: TraceEvent, inputs: &str, outputs: Vec<String>, feedback: usize) {
        self.trace.push(TraceRecord {
            step,
            skill: skill.as_str().to_owned(),
            event,
            inputs_digest: digest(inputs),
            outputs,
            feedback,
        });
    }
}

pub struct IrEngine {
    graph: Arc<KnowledgeGraph>,
    gateway: Arc<LlmGateway>,
    embedder: Arc<dyn Embedder>,
    few_shot: Option<Arc<FewShotCorpus>>,
    config: IrConfig,
}

impl IrEngine {
    pub fn new(
        graph: Arc<KnowledgeGraph>,
        gateway: Arc<LlmGateway>,
        embedder: Arc<dyn Embedder>,
        config: IrConfig,
    ) -> Self {
        Self {
            graph,
            gateway,
            embedder,
            few_shot: None,
            config,
        }
    }

    pub fn with_few_shot(mut self, corpus: Arc<FewShotCorpus>) -> Self {
        self.few_shot = Some(corpus);
        self
    }

    pub fn config(&self) -> &IrConfig {
        &self.config
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    fn examples(&self, question: &str, run: &Run) -> Result<Vec<FewShotExample>, IrError> {
        if !(run.examples_on || self.config.always_few_shot) {
            return Ok(Vec::new());
        }
        match &self.few_shot {
            Some(c) => Ok(c
                .select(self.embedder.as_ref(), question, self.config.few_shot_n)?
                .into_iter()
                .map(|(e, _)| e)
                .collect()),
            None => Ok(Vec::new()),
        }
    }

    fn topic_labels(&self, frontier: &[EntityId]) -> String {
        frontier
            .iter()
            .take(8)
            .map(|&e| self.graph.entities().display(e))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Orders `items` by similarity to `query`, best first; ties keep input order.
    fn rank(&self, query: &str, items: &[ContextItem]) -> Result<Vec<usize>, IrError> {
        let mut index = EmbeddingIndex::new(self.embedder.dim());
        for item in items {
            let text = if item.text.is_empty() {
                item.id.clone()
            } else {
                format!("{} {}", item.id, item.text)
            };
            index.insert(&item.id, &text, self.embedder.embed(&text)?)?;
        }
        let q = self.embedder.embed(query)?;
        Ok(index
            .top_k_vector(&q, items.len())?
            .hits
            .into_iter()
            .map(|h| h.chunk_id as usize)
            .collect())
    }

    /// Sends `request`, cutting its context down by similarity until it fits
    /// the window.
    fn complete_fitting(
        &self,
        mut request: SkillRequest,
        rag_query: &str,
        step: usize,
        run: &mut Run,
    ) -> Result<(SkillResponse, Vec<ContextItem>), IrError> {
        let mut ranked: Option<Vec<ContextItem>> = None;
        loop {
            match self.gateway.complete(&request) {
                Ok(resp) => {
                    run.llm_calls += 1;
                    run.record(
                        step,
                        request.skill,
                        TraceEvent::LlmCall,
                        &resp.prompt_digest,
                        resp.parsed_items.clone(),
                        request.feedback.len(),
                    );
                    return Ok((resp, request.context_items));
                }
                Err(LlmError::Budget { .. }) if request.context_items.len() > 1 => {
                    let order = match ranked.take() {
                        Some(r) => r,
                        None => {
                            let idx = self.rank(rag_query, &request.context_items)?;
                            idx.into_iter().map(|i| request.context_items[i].clone()).collect()
                        }
                    };
                    let keep = (request.context_items.len() / 2).max(1);
                    let kept: Vec<ContextItem> = order.iter().take(keep).cloned().collect();
                    run.record(
                        step,
                        request.skill,
                        TraceEvent::Rag,
                        rag_query,
                        kept.iter().map(|c| c.id.clone()).collect(),
                        0,
                    );
                    request.context_items = kept;
                    ranked = Some(order);
                }
                Err(e @ LlmError::Backend(_)) => {
                    run.llm_calls += 1;
                    return Err(e.into());
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn relation_items(&self, frontier: &[EntityId], candidates: &[RelationId]) -> Vec<ContextItem> {
        let mut seen: BTreeMap<String, ()> = BTreeMap::new();
        let mut out = Vec::new();
        for &r in candidates {
            let label = self.graph.relations().display(r).to_owned();
            if seen.insert(label.clone(), ()).is_some() {
                continue;
            }
            let anchors: Vec<&str> = frontier
                .iter()
                .filter(|&&e| {
                    self.graph.outgoing(e).iter().chain(self.graph.incoming(e)).any(|&(rel, _)| rel == r)
                })
                .take(3)
                .map(|&e| self.graph.entities().display(e))
                .collect();
            let text = if anchors.is_empty() {
                String::new()
            } else {
                format!("from {}", anchors.join(", "))
            };
            out.push(ContextItem::new(label, text));
        }
        out
    }

    /// Maps a model-produced label onto one of the offered relations.
    fn match_relation(&self, item: &str, offered: &[ContextItem], candidates: &[RelationId]) -> Option<RelationId> {
        let by_label = |want: &str| {
            candidates
                .iter()
                .copied()
                .find(|&r| self.graph.relations().display(r) == want)
        };
        if let Some(r) = by_label(item) {
            return offered.iter().any(|o| o.id == item).then_some(r);
        }
        let norm = normalize_label(item);
        if let Some(o) = offered.iter().find(|o| normalize_label(&o.id) == norm) {
            return by_label(&o.id);
        }
        let resolved = self.graph.contains_relation(item)?.id;
        let label = self.graph.relations().display(resolved);
        (candidates.contains(&resolved) && offered.iter().any(|o| o.id == label)).then_some(resolved)
    }

    /// Shared retry loop of the two relation skills. `attempts` includes the
    /// first call.
    #[allow(clippy::too_many_arguments)]
    fn relation_loop(
        &self,
        skill: SkillKind,
        question: &str,
        frontier: &[EntityId],
        candidates: &[RelationId],
        keep: Option<usize>,
        attempts: usize,
        step: usize,
        run: &mut Run,
    ) -> Result<Vec<RelationId>, IrError> {
        let mut items = self.relation_items(frontier, candidates);
        let rag_query = format!("{question} {}", self.topic_labels(frontier));
        let mut feedback: Vec<String> = Vec::new();
        let mut last_raw = String::new();
        for attempt in 0..attempts {
            let request = SkillRequest::new(skill, question)
                .with_context(items.clone())
                .with_few_shot(self.examples(question, run)?)
                .with_feedback(feedback.clone())
                .with_k(keep.unwrap_or(1));
            let (resp, offered) = self.complete_fitting(request, &rag_query, step, run)?;
            items = offered;
            last_raw = resp.raw_text.clone();
            let mut valid: Vec<RelationId> = Vec::new();
            let mut invalid: Vec<String> = Vec::new();
            for item in &resp.parsed_items {
                match self.match_relation(item, &items, candidates) {
                    Some(r) if !valid.contains(&r) => valid.push(r),
                    Some(_) => {}
                    None => invalid.push(item.clone()),
                }
            }
            if let Some(k) = keep {
                valid.truncate(k);
            }
            let last = attempt + 1 == attempts;
            if !valid.is_empty() && (invalid.is_empty() || last) {
                return Ok(valid);
            }
            if last {
                break;
            }
            run.examples_on = true;
            let msg = if invalid.is_empty() {
                "The reply named no relation. Answer with relation names from the candidate list.".to_owned()
            } else {
                format!(
                    "{} not in the candidate relations. Choose only from the list.",
                    invalid.iter().map(|s| format!("`{s}`")).collect::<Vec<_>>().join(", ")
                )
            };
            run.record(step, skill, TraceEvent::Feedback, &last_raw, vec![msg.clone()], feedback.len() + 1);
            feedback.push(msg);
        }
        Err(IrError::Skill {
            skill,
            message: format!("no valid relation after {attempts} attempts"),
            last_raw,
        })
    }

    fn relations_with_fallback(
        &self,
        question: &str,
        frontier: &[EntityId],
        candidates: &[RelationId],
        step: usize,
        run: &mut Run,
    ) -> Result<Vec<RelationId>, IrError> {
        if candidates.is_empty() {
            return Err(IrError::Config("no candidate relations".into()));
        }
        let single = self.relation_loop(
            SkillKind::RelationFilter,
            question,
            frontier,
            candidates,
            Some(self.config.k.max(1)),
            1 + self.config.retries,
            step,
            run,
        );
        match single {
            Err(IrError::Skill { last_raw, .. }) => {
                run.record(step, SkillKind::RelationMulti, TraceEvent::Fallback, &last_raw, vec![], 0);
                if self.config.retries == 0 {
                    return Err(IrError::Skill {
                        skill: SkillKind::RelationFilter,
                        message: "no valid relation and no fallback budget".into(),
                        last_raw,
                    });
                }
                self.relation_loop(
                    SkillKind::RelationMulti,
                    question,
                    frontier,
                    candidates,
                    None,
                    self.config.retries,
                    step,
                    run,
                )
            }
            other => other,
        }
    }

    /// Up to `k` offered relations named by the model. Invalid names trigger
    /// feedback retries; exhaustion escalates to [`Self::relation_multi_skill`].
    pub fn relation_filter_skill(
        &self,
        question: &str,
        topic: &TopicEntities,
        candidates: &[RelationId],
    ) -> Result<Vec<RelationId>, IrError> {
        let mut run = Run::default();
        self.relations_with_fallback(question, topic.ids(), candidates, 2, &mut run)
    }

    /// Every valid relation from an itemized reply.
    pub fn relation_multi_skill(
        &self,
        question: &str,
        topic: &TopicEntities,
        candidates: &[RelationId],
    ) -> Result<Vec<RelationId>, IrError> {
        if candidates.is_empty() {
            return Err(IrError::Config("no candidate relations".into()));
        }
        let mut run = Run::default();
        self.relation_loop(
            SkillKind::RelationMulti,
            question,
            topic.ids(),
            candidates,
            None,
            1 + self.config.retries,
            2,
            &mut run,
        )
    }

    fn provenance_line(&self, candidates: &CandidateSet, e: EntityId) -> String {
        let rels = self.graph.relations();
        let ents = self.graph.entities();
        let Some(p) = candidates.provenance.get(&e).and_then(|v| v.first()) else {
            return String::new();
        };
        let chain: Vec<&str> = p.relations.iter().map(|&r| rels.display(r)).collect();
        format!("via {} from {}", chain.join(" / "), ents.display(p.from))
    }

    /// Labels of offered candidates, with entities grouped by label.
    fn entity_items(&self, candidates: &CandidateSet) -> Vec<ContextItem> {
        let mut seen: BTreeMap<String, ()> = BTreeMap::new();
        let mut out = Vec::new();
        for &e in &candidates.entities {
            let label = self.graph.entities().display(e).to_owned();
            if seen.insert(label.clone(), ()).is_none() {
                out.push(ContextItem::new(label, self.provenance_line(candidates, e)));
            }
        }
        out
    }

    fn entity_decision(
        &self,
        question: &str,
        candidates: &CandidateSet,
        step: usize,
        run: &mut Run,
    ) -> Result<Decision, IrError> {
        if candidates.is_empty() {
            return Ok(Decision::Continue);
        }
        let request = SkillRequest::new(SkillKind::EntityFilter, question)
            .with_context(self.entity_items(candidates))
            .with_few_shot(self.examples(question, run)?);
        let (resp, offered) = self.complete_fitting(request, question, step, run)?;
        let raw = resp.raw_text.trim().trim_end_matches('.');
        if SENTINELS.iter().any(|s| raw.eq_ignore_ascii_case(s)) {
            return Ok(Decision::Continue);
        }
        let mut answers: Vec<String> = Vec::new();
        for item in &resp.parsed_items {
            let norm = normalize_label(item);
            if let Some(o) = offered
                .iter()
                .find(|o| o.id == *item)
                .or_else(|| offered.iter().find(|o| normalize_label(&o.id) == norm))
            {
                if !answers.contains(&o.id) {
                    answers.push(o.id.clone());
                }
            }
        }
        if answers.is_empty() {
            Ok(Decision::Continue)
        } else {
            Ok(Decision::Answer(answers))
        }
    }

    /// Candidate labels the model accepts as answers, or `Continue`.
    /// Labels not among the candidates are dropped.
    pub fn entity_filter_skill(&self, question: &str, candidates: &CandidateSet) -> Result<Decision, IrError> {
        let mut run = Run::default();
        self.entity_decision(question, candidates, 4, &mut run)
    }

    /// Hop loop: relations around the frontier, relation filter, expansion
    /// through CVT nodes, entity filter. The frontier is replaced by the
    /// candidates after each unanswered hop.
    pub fn run_ir(&self, question: &str, topic: &TopicEntities) -> AnswerSet {
        let mut run = Run::default();
        let mut frontier: Vec<EntityId> = topic.ids().to_vec();
        let mut failure: Option<String> = None;
        let mut hops = 0;
        for hop in 1..=self.config.max_hops {
            hops = hop;
            let base = (hop - 1) * STEPS_PER_HOP;
            let relations = self.graph.one_hop_relations(&frontier);
            run.record(
                base + 1,
                SkillKind::RelationFilter,
                TraceEvent::Retrieval,
                &self.topic_labels(&frontier),
                relations.iter().map(|&r| self.graph.relations().display(r).to_owned()).collect(),
                0,
            );
            if relations.is_empty() {
                failure = Some(format!("hop {hop}: no relations around the frontier"));
                break;
            }
            let chosen = match self.relations_with_fallback(question, &frontier, &relations, base + 2, &mut run) {
                Ok(c) => c,
                Err(e) => {
                    failure = Some(format!("hop {hop}: {e}"));
                    break;
                }
            };
            let mut candidates = self.graph.one_hop_entities(&frontier, &chosen, true);
            candidates.hop = hop;
            run.record(
                base + 3,
                SkillKind::EntityFilter,
                TraceEvent::Retrieval,
                &chosen.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","),
                candidates.entities.iter().map(|&e| self.graph.entities().display(e).to_owned()).collect(),
                0,
            );
            if candidates.is_empty() {
                failure = Some(format!("hop {hop}: expansion reached no entities"));
                break;
            }
            match self.entity_decision(question, &candidates, base + 4, &mut run) {
                Ok(Decision::Answer(answers)) => {
                    let mut out = AnswerSet::accepted(answers);
                    out.hops_used = hop;
                    out.llm_calls = run.llm_calls;
                    out.trace = run.trace;
                    return out;
                }
                Ok(Decision::Continue) => frontier = candidates.entities,
                Err(e) => {
                    failure = Some(format!("hop {hop}: {e}"));
                    break;
                }
            }
        }
        let failure = failure.unwrap_or_else(|| format!("no answer within {} hops", self.config.max_hops));
        run.record(hops * STEPS_PER_HOP, SkillKind::EntityFilter, TraceEvent::Failure, question, vec![failure.clone()], 0);
        let mut out = AnswerSet::rejected(Some(failure));
        out.hops_used = hops;
        out.llm_calls = run.llm_calls;
        out.trace = run.trace;
        out
    }
}

impl QaPipeline for IrEngine {
    fn answer(&self, instance: &QuestionInstance) -> Result<AnswerSet, PipelineError> {
        let err = |message: String| PipelineError::Instance {
            id: instance.id.clone(),
            message,
        };
        let refs = instance
            .topic_entities
            .as_deref()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| err("no topic entities".into()))?;
        let topic = TopicEntities::resolve(&self.graph, refs).map_err(|e| err(e.to_string()))?;
        Ok(self.run_ir(&instance.question, &topic))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::llm::{GatewayConfig, ScriptEntry, ScriptedBackend};
    use crate::store::GraphBuilder;
    use crate::trace::feedback_rounds;

    fn entry(skill: SkillKind, responses: &[&str]) -> ScriptEntry {
        ScriptEntry {
            skill,
            question: "*".into(),
            context: None,
            prompt_hash: None,
            responses: responses.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn engine(graph: KnowledgeGraph, script: Vec<ScriptEntry>, config: IrConfig) -> (IrEngine, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(script));
        let gw = Arc::new(LlmGateway::new(backend.clone(), GatewayConfig::default()));
        let e = IrEngine::new(Arc::new(graph), gw, Arc::new(HashEmbedder::default()), config);
        (e, backend)
    }

    fn movie_graph() -> KnowledgeGraph {
        let mut b = GraphBuilder::labeled();
        b.add("Kismet", "directed_by", "William Dieterle");
        b.add("Kismet", "written_by", "Edward Knoblock");
        b.build()
    }

    fn topic(g: &KnowledgeGraph, label: &str) -> TopicEntities {
        TopicEntities::resolve(g, &[label.to_owned()]).unwrap()
    }

    #[test]
    fn one_hop_answer_takes_two_calls() {
        let (e, _) = engine(
            movie_graph(),
            vec![
                entry(SkillKind::RelationFilter, &["directed_by"]),
                entry(SkillKind::EntityFilter, &["answer: William Dieterle"]),
            ],
            IrConfig::default(),
        );
        let t = topic(e.graph(), "Kismet");
        let a = e.run_ir("who directed Kismet?", &t);
        assert!(a.accepted);
        assert_eq!(a.answers, vec!["William Dieterle"]);
        assert_eq!(a.llm_calls, 2);
        assert_eq!(a.hops_used, 1);
    }

    #[test]
    fn misspelled_relation_is_corrected_after_feedback() {
        let (e, _) = engine(
            movie_graph(),
            vec![
                entry(SkillKind::RelationFilter, &["direted_by", "directed_by"]),
                entry(SkillKind::EntityFilter, &["answer: William Dieterle"]),
            ],
            IrConfig::default(),
        );
        let t = topic(e.graph(), "Kismet");
        let a = e.run_ir("who directed Kismet?", &t);
        assert!(a.accepted);
        assert_eq!(feedback_rounds(&a.trace, "relation-filter"), 1);
    }

    #[test]
    fn always_invalid_relation_falls_back_then_fails() {
        let (e, backend) = engine(
            movie_graph(),
            vec![
                entry(SkillKind::RelationFilter, &["nope"]),
                entry(SkillKind::RelationMulti, &["1. nope\n2. nada"]),
            ],
            IrConfig::default(),
        );
        let t = topic(e.graph(), "Kismet");
        let a = e.run_ir("who directed Kismet?", &t);
        assert!(!a.accepted);
        assert_eq!(feedback_rounds(&a.trace, "relation-filter"), 2);
        assert!(a.trace.iter().any(|r| r.event == TraceEvent::Fallback));
        assert_eq!(backend.calls(), 3 + 2);
        assert!(a.llm_calls <= IrConfig::default().max_llm_calls());
    }

    #[test]
    fn multi_skill_keeps_valid_items() {
        let (e, _) = engine(movie_graph(), vec![entry(SkillKind::RelationMulti, &["1. directed_by\n2. bogus\n3. written_by"])], IrConfig { retries: 0, ..IrConfig::default() });
        let g = e.graph();
        let t = topic(g, "Kismet");
        let cands = g.one_hop_relations(t.ids());
        let got = e.relation_multi_skill("q", &t, &cands).unwrap();
        let labels: Vec<&str> = got.iter().map(|&r| g.relations().display(r)).collect();
        assert_eq!(labels, vec!["directed_by", "written_by"]);
    }

    #[test]
    fn entity_filter_sentinels_and_hallucinations_continue() {
        for (reply, expect) in [
            ("none of these", Decision::Continue),
            ("answer: Someone Else", Decision::Continue),
            ("Answer: william dieterle", Decision::Answer(vec!["William Dieterle".into()])),
        ] {
            let (e, _) = engine(movie_graph(), vec![entry(SkillKind::EntityFilter, &[reply])], IrConfig::default());
            let g = e.graph();
            let t = topic(g, "Kismet");
            let d = g.relations().id_of("directed_by").unwrap();
            let c = g.one_hop_entities(t.ids(), &[d], true);
            assert_eq!(e.entity_filter_skill("who directed Kismet?", &c).unwrap(), expect, "{reply}");
        }
    }

    #[test]
    fn cvt_chain_is_answered_in_one_hop() {
        let mut b = GraphBuilder::labeled();
        b.add("Obama", "position_held", "cvt1");
        b.add("cvt1", "office", "President");
        b.mark_cvt("cvt1");
        let (e, _) = engine(
            b.build(),
            vec![
                entry(SkillKind::RelationFilter, &["position_held"]),
                entry(SkillKind::EntityFilter, &["answer: President"]),
            ],
            IrConfig::default(),
        );
        let t = topic(e.graph(), "Obama");
        let a = e.run_ir("what office did Obama hold?", &t);
        assert_eq!(a.answers, vec!["President"]);
        assert_eq!(a.hops_used, 1);
    }

    #[test]
    fn continuing_oracle_exhausts_the_hop_budget() {
        let mut b = GraphBuilder::labeled();
        b.add("a", "r", "b");
        b.add("b", "r", "c");
        let config = IrConfig { max_hops: 3, ..IrConfig::default() };
        let (e, _) = engine(
            b.build(),
            vec![entry(SkillKind::RelationFilter, &["r"]), entry(SkillKind::EntityFilter, &["continue"])],
            config.clone(),
        );
        let t = topic(e.graph(), "a");
        let a = e.run_ir("q", &t);
        assert!(!a.accepted);
        assert_eq!(a.hops_used, 3);
        assert!(a.llm_calls <= config.max_llm_calls());
    }

    #[test]
    fn oversized_relation_lists_are_cut_by_retrieval() {
        let mut b = GraphBuilder::labeled();
        for i in 0..400 {
            b.add("hub", &format!("relation_number_{i}_with_a_long_name"), &format!("t{i}"));
        }
        b.add("hub", "directed_by", "Director");
        let backend = Arc::new(ScriptedBackend::new(vec![
            entry(SkillKind::RelationFilter, &["directed_by"]),
            entry(SkillKind::EntityFilter, &["answer: Director"]),
        ]));
        let gw = Arc::new(LlmGateway::new(backend, GatewayConfig { window: 1024, ..GatewayConfig::default() }));
        let e = IrEngine::new(Arc::new(b.build()), gw, Arc::new(HashEmbedder::default()), IrConfig::default());
        let t = topic(e.graph(), "hub");
        let a = e.run_ir("who directed_by hub", &t);
        assert!(a.trace.iter().any(|r| r.event == TraceEvent::Rag));
        assert!(a.accepted, "{:?}", a.failure);
    }
}
