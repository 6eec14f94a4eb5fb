//! Call budget and answer validity of the IR loop under arbitrary replies.

use std::sync::Arc;

use kgqa_core::embed::HashEmbedder;
use kgqa_core::ir::{IrConfig, IrEngine, TopicEntities};
use kgqa_core::llm::{GatewayConfig, LlmGateway, ScriptEntry, ScriptedBackend, SkillKind};
use kgqa_core::store::{GraphBuilder, KnowledgeGraph};
use proptest::prelude::*;

const QUESTION: &str = "where was the spouse of Alice born";

fn graph() -> KnowledgeGraph {
    let mut b = GraphBuilder::labeled();
    b.add("Alice", "marriage", "m1");
    b.add("m1", "spouse", "Bob");
    b.add("m1", "from_year", "1990");
    b.add("Bob", "born_in", "Paris");
    b.add("Alice", "born_in", "Lyon");
    b.add("Paris", "capital_of", "France");
    b.mark_cvt("m1");
    b.build()
}

fn reply() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "marriage", "spouse", "born_in", "capital_of", "nonsense", "none", "answer: Paris",
        "answer: Bob; Atlantis", "Lyon", "1. born_in\n2. marriage", "!transport down", "",
    ])
    .prop_map(str::to_owned)
}

fn engine(entries: Vec<ScriptEntry>, config: IrConfig) -> (IrEngine, Arc<ScriptedBackend>) {
    let backend = Arc::new(ScriptedBackend::new(entries));
    let gateway = Arc::new(LlmGateway::new(backend.clone(), GatewayConfig::default()));
    (IrEngine::new(Arc::new(graph()), gateway, Arc::new(HashEmbedder::default()), config), backend)
}

fn entry(skill: SkillKind, responses: Vec<String>) -> ScriptEntry {
    ScriptEntry { skill, question: QUESTION.into(), context: None, prompt_hash: None, responses }
}

proptest! {
    #[test]
    fn calls_stay_within_bound(
        filter in prop::collection::vec(reply(), 1..8),
        multi in prop::collection::vec(reply(), 1..4),
        entity in prop::collection::vec(reply(), 1..5),
        retries in 0usize..3,
        max_hops in 1usize..4,
    ) {
        let config = IrConfig { retries, max_hops, ..IrConfig::default() };
        let bound = config.max_llm_calls();
        let (e, backend) = engine(
            vec![
                entry(SkillKind::RelationFilter, filter),
                entry(SkillKind::RelationMulti, multi),
                entry(SkillKind::EntityFilter, entity),
            ],
            config,
        );
        let g = graph();
        let topic = TopicEntities::resolve(&g, &["Alice".to_owned()]).unwrap();
        let a = e.run_ir(QUESTION, &topic);
        prop_assert!(a.llm_calls <= bound, "{} > {}", a.llm_calls, bound);
        prop_assert_eq!(a.llm_calls, backend.calls());
        prop_assert!(a.hops_used <= max_hops);
        prop_assert_eq!(a.accepted, !a.answers.is_empty());
        for ans in &a.answers {
            prop_assert!(g.entities().lookup_label(ans).is_some(), "{} is not in the graph", ans);
            prop_assert!(ans != "m1");
        }
    }
}

#[test]
fn cvt_answer_is_reached_in_one_hop() {
    let (e, _) = engine(
        vec![
            entry(SkillKind::RelationFilter, vec!["marriage".into()]),
            entry(SkillKind::EntityFilter, vec!["answer: Bob".into()]),
        ],
        IrConfig::default(),
    );
    let g = graph();
    let topic = TopicEntities::resolve(&g, &["Alice".to_owned()]).unwrap();
    let a = e.run_ir(QUESTION, &topic);
    assert!(a.accepted);
    assert_eq!(a.answers, vec!["Bob"]);
    assert_eq!((a.hops_used, a.llm_calls), (1, 2));
}

#[test]
fn two_hops_through_a_cvt() {
    let (e, _) = engine(
        vec![
            entry(SkillKind::RelationFilter, vec!["marriage".into(), "born_in".into()]),
            entry(SkillKind::EntityFilter, vec!["none".into(), "answer: Paris".into()]),
        ],
        IrConfig::default(),
    );
    let g = graph();
    let topic = TopicEntities::resolve(&g, &["Alice".to_owned()]).unwrap();
    let a = e.run_ir(QUESTION, &topic);
    assert_eq!(a.answers, vec!["Paris"]);
    assert_eq!((a.hops_used, a.llm_calls), (2, 4));
}
