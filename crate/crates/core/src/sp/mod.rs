//! Semantic parsing: identify entities and predicates from description
//! corpora, generate SPARQL, execute it, and feed endpoint errors back into
//! generation.

mod client;
mod descriptions;
mod sparql;

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

pub use client::{
    normalize_query, BindingSet, BindingValue, EndpointError, HttpSparqlEndpoint, MockError,
    MockFixture, MockSparqlEndpoint, SparqlEndpoint, ValueKind,
};
pub use descriptions::{
    fetch_descriptions, DescriptionSource, HttpDescriptionSource, TermCatalog, TermEntry,
    TermIndex, TermKind,
};
pub use sparql::{
    candidate_blocks, extract_query, extract_terms_from_sparql, validate, Dialect, ExtractedTerms,
    QueryForm, SparqlQuery,
};

use crate::embed::{EmbedError, Embedder, FewShotCorpus};
use crate::eval::QuestionInstance;
use crate::llm::{ContextItem, FewShotExample, LlmError, LlmGateway, SkillKind, SkillRequest};
use crate::pipeline::{AnswerSet, PipelineError, QaPipeline};
use crate::trace::{digest, TraceEvent, TraceRecord};

#[derive(Debug, Error)]
pub enum SpError {
    /// Structural validation failure; the message is model feedback.
    #[error("invalid SPARQL: {0}")]
    Invalid(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("{skill} failed: {message}")]
    Skill {
        skill: SkillKind,
        message: String,
        last_raw: String,
    },
}

impl SpError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        SpError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpConfig {
    pub dialect: Dialect,
    pub k_entities: usize,
    pub k_predicates: usize,
    pub few_shot_n: usize,
    /// Feedback retries per skill, and extra execution attempts.
    pub retries: usize,
    /// Take entities from the instance (or its gold query) instead of
    /// identifying them.
    pub known_entities: bool,
}

impl Default for SpConfig {
    fn default() -> Self {
        Self {
            dialect: Dialect::Wikidata,
            k_entities: 10,
            k_predicates: 10,
            few_shot_n: 5,
            retries: 2,
            known_entities: false,
        }
    }
}

const STEP_ENTITIES: usize = 1;
const STEP_PREDICATES: usize = 2;
const STEP_GENERATE: usize = 3;

#[derive(Default)]
struct Run {
    trace: Vec<TraceRecord>,
    llm_calls: usize,
    executions: usize,
}

impl Run {
    fn record(
        &mut self,
        step: usize,
        skill: &str,
        event: TraceEvent,
        inputs: &str,
        outputs: Vec<String>,
        feedback: usize,
    ) {
        self.trace.push(TraceRecord {
            step,
            skill: skill.to_owned(),
            event,
            inputs_digest: digest(inputs),
            outputs,
            feedback,
        });
    }
}

struct SkillFailure {
    error: SpError,
}

impl From<SpError> for SkillFailure {
    fn from(error: SpError) -> Self {
        Self { error }
    }
}

impl From<LlmError> for SkillFailure {
    fn from(e: LlmError) -> Self {
        Self { error: e.into() }
    }
}

impl From<EmbedError> for SkillFailure {
    fn from(e: EmbedError) -> Self {
        Self { error: e.into() }
    }
}

pub struct SpEngine {
    gateway: Arc<LlmGateway>,
    endpoint: Arc<dyn SparqlEndpoint>,
    embedder: Arc<dyn Embedder>,
    entity_index: Option<Arc<TermIndex>>,
    predicate_index: Option<Arc<TermIndex>>,
    few_shot: Option<Arc<FewShotCorpus>>,
    config: SpConfig,
}

impl SpEngine {
    pub fn new(
        gateway: Arc<LlmGateway>,
        endpoint: Arc<dyn SparqlEndpoint>,
        embedder: Arc<dyn Embedder>,
        config: SpConfig,
    ) -> Self {
        Self {
            gateway,
            endpoint,
            embedder,
            entity_index: None,
            predicate_index: None,
            few_shot: None,
            config,
        }
    }

    pub fn with_entity_index(mut self, index: Arc<TermIndex>) -> Self {
        self.entity_index = Some(index);
        self
    }

    pub fn with_predicate_index(mut self, index: Arc<TermIndex>) -> Self {
        self.predicate_index = Some(index);
        self
    }

    pub fn with_few_shot(mut self, corpus: Arc<FewShotCorpus>) -> Self {
        self.few_shot = Some(corpus);
        self
    }

    pub fn config(&self) -> &SpConfig {
        &self.config
    }

    fn index_for(&self, kind: TermKind) -> Option<&TermIndex> {
        match kind {
            TermKind::Entity => self.entity_index.as_deref(),
            TermKind::Predicate => self.predicate_index.as_deref(),
        }
    }

    fn context_item(&self, kind: TermKind, id: &str) -> ContextItem {
        let text = self
            .index_for(kind)
            .and_then(|i| i.description(id))
            .unwrap_or(id);
        ContextItem::new(id, text)
    }

    /// Entity ids chosen by the model from the top `k_entities` retrieved
    /// descriptions. Every returned id was offered.
    pub fn identify_entities(&self, question: &str) -> Result<Vec<String>, SpError> {
        let mut run = Run::default();
        self.identify(TermKind::Entity, question, &mut run)
            .map_err(|f| f.error)
    }

    pub fn identify_predicates(&self, question: &str) -> Result<Vec<String>, SpError> {
        let mut run = Run::default();
        self.identify(TermKind::Predicate, question, &mut run)
            .map_err(|f| f.error)
    }

    fn identify(
        &self,
        kind: TermKind,
        question: &str,
        run: &mut Run,
    ) -> Result<Vec<String>, SkillFailure> {
        let (skill, step, k) = match kind {
            TermKind::Entity => (SkillKind::EntityIdentify, STEP_ENTITIES, self.config.k_entities),
            TermKind::Predicate => (
                SkillKind::PredicateIdentify,
                STEP_PREDICATES,
                self.config.k_predicates,
            ),
        };
        let Some(index) = self.index_for(kind) else {
            run.record(step, skill.as_str(), TraceEvent::Retrieval, question, vec![], 0);
            return Ok(Vec::new());
        };
        let offered = index.retrieve(self.embedder.as_ref(), question, k)?;
        run.record(
            step,
            skill.as_str(),
            TraceEvent::Retrieval,
            question,
            offered.clone(),
            0,
        );
        if offered.is_empty() {
            return Ok(Vec::new());
        }
        let mut items: Vec<ContextItem> = offered.iter().map(|id| self.context_item(kind, id)).collect();
        let mut feedback: Vec<String> = Vec::new();
        let mut attempt = 0;
        loop {
            let req = SkillRequest::new(skill, question)
                .with_context(items.clone())
                .with_feedback(feedback.clone())
                .with_k(k);
            let resp = match self.gateway.complete(&req) {
                Ok(r) => r,
                Err(LlmError::Budget { .. }) if items.len() > 1 => {
                    let keep = items.len() / 2;
                    items.truncate(keep);
                    run.record(
                        step,
                        skill.as_str(),
                        TraceEvent::Rag,
                        question,
                        items.iter().map(|i| i.id.clone()).collect(),
                        0,
                    );
                    continue;
                }
                Err(e) => {
                    if matches!(e, LlmError::Backend(_)) {
                        run.llm_calls += 1;
                    }
                    return Err(e.into());
                }
            };
            run.llm_calls += 1;
            run.record(
                step,
                skill.as_str(),
                TraceEvent::LlmCall,
                &resp.prompt_digest,
                resp.parsed_items.clone(),
                feedback.len(),
            );
            let offered_now: Vec<&str> = items.iter().map(|i| i.id.as_str()).collect();
            let mut valid: Vec<String> = Vec::new();
            let mut invalid: Vec<String> = Vec::new();
            for item in &resp.parsed_items {
                match match_offered(item, &offered_now) {
                    Some(id) if !valid.iter().any(|v| v == id) => valid.push(id.to_owned()),
                    Some(_) => {}
                    None => invalid.push(item.clone()),
                }
            }
            valid.truncate(k);
            if invalid.is_empty() && !valid.is_empty() {
                return Ok(valid);
            }
            if attempt == self.config.retries {
                if !valid.is_empty() {
                    return Ok(valid);
                }
                run.record(step, skill.as_str(), TraceEvent::Failure, question, vec![], 0);
                return Err(SpError::Skill {
                    skill,
                    message: format!("no valid {kind} ids after {} attempts", attempt + 1),
                    last_raw: resp.raw_text,
                }
                .into());
            }
            let msg = if invalid.is_empty() {
                format!("The reply named no {kind} ids. Answer with ids from the list.")
            } else {
                format!(
                    "{} not among the listed {kind} ids. Choose only from the list.",
                    invalid
                        .iter()
                        .map(|s| format!("`{s}`"))
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            };
            run.record(step, skill.as_str(), TraceEvent::Feedback, &msg, vec![msg.clone()], 0);
            feedback.push(msg);
            attempt += 1;
        }
    }

    /// First structurally valid query in the model's reply; validation
    /// failures are fed back up to `retries` times.
    pub fn generate_sparql(
        &self,
        question: &str,
        entities: &[String],
        predicates: &[String],
        few_shot: &[FewShotExample],
    ) -> Result<SparqlQuery, SpError> {
        let mut run = Run::default();
        self.generate(question, entities, predicates, few_shot, &[], STEP_GENERATE, &mut run)
            .map_err(|f| f.error)
    }

    #[allow(clippy::too_many_arguments)]
    fn generate(
        &self,
        question: &str,
        entities: &[String],
        predicates: &[String],
        few_shot: &[FewShotExample],
        prior_feedback: &[String],
        step: usize,
        run: &mut Run,
    ) -> Result<SparqlQuery, SkillFailure> {
        let skill = SkillKind::SparqlGenerate;
        if entities.is_empty() && predicates.is_empty() && self.config.dialect != Dialect::KqaproLiteral
        {
            return Err(SpError::Skill {
                skill,
                message: "no entities or predicates to build a query from".into(),
                last_raw: String::new(),
            }
            .into());
        }
        let context: Vec<ContextItem> = entities
            .iter()
            .map(|id| self.context_item(TermKind::Entity, id))
            .chain(
                predicates
                    .iter()
                    .map(|id| self.context_item(TermKind::Predicate, id)),
            )
            .collect();
        let mut feedback = prior_feedback.to_vec();
        let mut attempt = 0;
        loop {
            let req = SkillRequest::new(skill, question)
                .with_context(context.clone())
                .with_few_shot(few_shot.to_vec())
                .with_feedback(feedback.clone());
            let resp = self.gateway.complete(&req).inspect_err(|e| {
                if matches!(e, LlmError::Backend(_)) {
                    run.llm_calls += 1;
                }
            })?;
            run.llm_calls += 1;
            run.record(
                step,
                skill.as_str(),
                TraceEvent::LlmCall,
                &resp.prompt_digest,
                resp.parsed_items.clone(),
                feedback.len(),
            );
            let mut last_err = None;
            for block in &resp.parsed_items {
                match SparqlQuery::parse(block, self.config.dialect) {
                    Ok(q) => return Ok(q),
                    Err(e) => last_err = Some(e),
                }
            }
            let reason = match last_err {
                Some(SpError::Invalid(m)) => m,
                Some(other) => other.to_string(),
                None => "no SPARQL query found in the reply".into(),
            };
            if attempt == self.config.retries {
                run.record(step, skill.as_str(), TraceEvent::Failure, &reason, vec![], 0);
                return Err(SpError::Skill {
                    skill,
                    message: reason,
                    last_raw: resp.raw_text,
                }
                .into());
            }
            let msg = format!("The query is not valid SPARQL: {reason}.");
            run.record(step, skill.as_str(), TraceEvent::Feedback, &msg, vec![msg.clone()], 0);
            feedback.push(msg);
            attempt += 1;
        }
    }

    pub fn execute(&self, query: &SparqlQuery) -> Result<BindingSet, SpError> {
        Ok(self.endpoint.execute(&query.text)?)
    }

    /// Full pipeline. At most `1 + retries` queries are executed, and only
    /// structurally valid ones.
    pub fn run_sp(&self, question: &str, known_entities: Option<&[String]>) -> AnswerSet {
        let mut run = Run::default();
        let outcome = self.run_inner(question, known_entities, &mut run);
        let mut answer = match outcome {
            Ok(answers) => AnswerSet::accepted(answers),
            Err(f) => AnswerSet::rejected(Some(f.error.to_string())),
        };
        answer.llm_calls = run.llm_calls;
        answer.hops_used = run.executions;
        answer.trace = run.trace;
        answer
    }

    fn run_inner(
        &self,
        question: &str,
        known_entities: Option<&[String]>,
        run: &mut Run,
    ) -> Result<Vec<String>, SkillFailure> {
        let entities = match known_entities {
            Some(ids) => {
                run.record(
                    STEP_ENTITIES,
                    SkillKind::EntityIdentify.as_str(),
                    TraceEvent::Retrieval,
                    "known-entities",
                    ids.to_vec(),
                    0,
                );
                ids.to_vec()
            }
            None => self.identify(TermKind::Entity, question, run)?,
        };
        let predicates = self.identify(TermKind::Predicate, question, run)?;
        let few_shot: Vec<FewShotExample> = match &self.few_shot {
            Some(c) if self.config.few_shot_n > 0 => c
                .select(self.embedder.as_ref(), question, self.config.few_shot_n)?
                .into_iter()
                .map(|(ex, _)| ex)
                .collect(),
            _ => Vec::new(),
        };

        let mut exec_feedback: Vec<String> = Vec::new();
        for attempt in 0..=self.config.retries {
            let step = STEP_GENERATE + attempt;
            let query = self.generate(
                question,
                &entities,
                &predicates,
                &few_shot,
                &exec_feedback,
                step,
                run,
            )?;
            run.executions += 1;
            let result = self.endpoint.execute(&query.text);
            let msg = match result {
                Ok(bindings) => {
                    let answers = bindings.answers();
                    run.record(
                        step,
                        "execute",
                        TraceEvent::Retrieval,
                        &query.text,
                        answers.clone(),
                        0,
                    );
                    if !answers.is_empty() {
                        return Ok(answers);
                    }
                    "The query ran but returned no results.".to_owned()
                }
                Err(e) => {
                    let m = format!("The endpoint rejected the query: {}", e.feedback_text());
                    run.record(step, "execute", TraceEvent::Failure, &query.text, vec![m.clone()], 0);
                    m
                }
            };
            run.record(step, "execute", TraceEvent::Feedback, &msg, vec![msg.clone()], 0);
            exec_feedback.push(format!("Previous query: {}\n{msg}", query.text));
        }
        Err(SpError::Skill {
            skill: SkillKind::SparqlGenerate,
            message: format!(
                "no query produced answers after {} executions",
                run.executions
            ),
            last_raw: String::new(),
        }
        .into())
    }
}

fn match_offered<'a>(item: &str, offered: &[&'a str]) -> Option<&'a str> {
    let item = item.trim();
    if let Some(id) = offered.iter().find(|o| **o == item) {
        return Some(id);
    }
    let head = item
        .split(|c: char| c == ':' || c.is_whitespace() || c == '(')
        .next()
        .unwrap_or("")
        .trim();
    offered
        .iter()
        .find(|o| **o == head || o.eq_ignore_ascii_case(item))
        .copied()
}

impl QaPipeline for SpEngine {
    fn answer(&self, instance: &QuestionInstance) -> Result<AnswerSet, PipelineError> {
        if !self.config.known_entities {
            return Ok(self.run_sp(&instance.question, None));
        }
        let known = match (&instance.topic_entities, &instance.gold_sparql) {
            (Some(t), _) if !t.is_empty() => t.clone(),
            (_, Some(q)) => extract_terms_from_sparql(q, self.config.dialect)
                .map_err(|e| PipelineError::Instance {
                    id: instance.id.clone(),
                    message: e.to_string(),
                })?
                .entities,
            _ => {
                return Err(PipelineError::Instance {
                    id: instance.id.clone(),
                    message: "known-entities mode needs topic entities or a gold query".into(),
                })
            }
        };
        Ok(self.run_sp(&instance.question, Some(&known)))
    }
}
