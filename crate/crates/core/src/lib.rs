//! Multi-hop question answering over knowledge graphs.
//!
//! Two answering strategies are provided on top of shared infrastructure:
//!
//! - [`ir`]: iterative retrieval. Starting at the topic entities, the engine
//!   gathers one-hop relations, lets an LLM pick the relevant ones, expands the
//!   frontier along them (looking through CVT mediator nodes), and asks the LLM
//!   whether any candidate answers the question.
//! - [`sp`]: semantic parsing. Entities and predicates are retrieved from
//!   description corpora, the LLM writes a SPARQL query, and execution errors
//!   are fed back until the query runs.
//!
//! The supporting pieces are the in-memory [`store`], the [`llm`] gateway with
//! a scripted backend for deterministic runs, the [`embed`] vector index used
//! for few-shot selection and RAG, and the [`eval`] harness.

pub mod embed;
pub mod eval;
pub mod ir;
pub mod llm;
pub mod pipeline;
pub mod sp;
pub mod store;
pub mod trace;

pub use embed::{
    cosine, Chunking, EmbeddingIndex, EmbeddingVector, Embedder, FewShotCorpus, HashEmbedder,
};
pub use eval::{EvalConfig, EvalReport, QuestionInstance};
pub use ir::{IrConfig, IrEngine, QueryPath, TopicEntities};
pub use llm::{FewShotExample, LlmGateway, ScriptedBackend, SkillKind, SkillRequest, SkillResponse};
pub use pipeline::{AnswerSet, QaPipeline};
pub use sp::{Dialect, SpConfig, SpEngine, SparqlQuery};
pub use store::{CandidateSet, EntityId, KnowledgeGraph, LoadReport, RelationId, Triple};
pub use trace::TraceRecord;
