//! Checkpoint resume is equivalent to an uninterrupted run.

use std::collections::BTreeMap;

use kgqa_core::eval::{evaluate, read_checkpoint, DatasetTag, EvalConfig, QuestionInstance, Sample};
use kgqa_core::pipeline::{AnswerSet, PipelineError, QaPipeline};
use proptest::prelude::*;

/// Answers with the gold set on even ids, a wrong label on odd ids.
struct Alternating;

impl QaPipeline for Alternating {
    fn answer(&self, i: &QuestionInstance) -> Result<AnswerSet, PipelineError> {
        let n: usize = i.id.trim_start_matches('q').parse().unwrap();
        if n % 5 == 4 {
            return Err(PipelineError::Instance { id: i.id.clone(), message: "boom".into() });
        }
        let mut a = if n % 2 == 0 {
            AnswerSet::accepted(i.gold_answers.clone())
        } else {
            AnswerSet::accepted(vec!["wrong".into()])
        };
        a.llm_calls = n % 3;
        Ok(a)
    }
}

fn instances(n: usize) -> Vec<QuestionInstance> {
    (0..n)
        .map(|i| QuestionInstance {
            id: format!("q{i}"),
            question: format!("question {i}"),
            topic_entities: None,
            gold_answers: vec![format!("answer {i}")],
            gold_sparql: None,
            dataset: DatasetTag::Webqsp,
            extras: BTreeMap::new(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn resume_equals_uninterrupted(n in 1usize..30, cut in 0usize..30, workers in 1usize..4, seed in 0u64..5) {
        let dir = tempfile::tempdir().unwrap();
        let data = instances(n);
        let sample = Sample::Random { n: n.saturating_sub(1).max(1), seed };
        let base = EvalConfig { workers, sample, ..EvalConfig::default() };
        let full = evaluate(&Alternating, &data, &base).unwrap();

        let ckpt = dir.path().join("ckpt.jsonl");
        let first = EvalConfig { checkpoint: Some(ckpt.clone()), interrupt_after: Some(cut), ..base.clone() };
        let partial = evaluate(&Alternating, &data, &first).unwrap();
        prop_assert_eq!(partial.complete, cut >= full.records.len());
        prop_assert_eq!(read_checkpoint(&ckpt).unwrap().len(), cut.min(full.records.len()));

        let second = EvalConfig { checkpoint: Some(ckpt), resume: true, ..base };
        let resumed = evaluate(&Alternating, &data, &second).unwrap();
        prop_assert!(resumed.complete);
        prop_assert_eq!(resumed.records_jsonl(), full.records_jsonl());
        prop_assert_eq!(resumed.summary_text(), full.summary_text());
    }
}

#[test]
fn aggregates_follow_the_records() {
    let report = evaluate(&Alternating, &instances(10), &EvalConfig::default()).unwrap();
    let a = &report.aggregates;
    assert_eq!(a.total, 10);
    assert_eq!(a.failures, 2);
    assert_eq!(a.accepted, 8);
    assert!((a.hits_at_1 - 0.4).abs() < 1e-12);
    assert!((a.exact_match - 0.4).abs() < 1e-12);
    assert_eq!(a.llm_calls, (0..10).filter(|n| n % 5 != 4).map(|n| n % 3).sum::<usize>());
}
