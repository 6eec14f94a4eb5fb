//! Exact top-k search against an exhaustive cosine scan.

use kgqa_core::embed::{EmbeddingIndex, EmbeddingVector, Embedder, HashEmbedder};
use proptest::prelude::*;

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn nonzero(mut v: Vec<f64>) -> Vec<f64> {
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    v
}

proptest! {
    #[test]
    fn top_k_matches_scan(
        rows in prop::collection::vec(prop::collection::vec(-2i8..=2, 4), 1..60),
        q in prop::collection::vec(-2i8..=2, 4),
        k in 0usize..70,
    ) {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| nonzero(r.into_iter().map(f64::from).collect())).collect();
        let q = nonzero(q.into_iter().map(f64::from).collect());
        let mut index = EmbeddingIndex::new(4);
        for (i, r) in rows.iter().enumerate() {
            index.insert(&format!("s{i}"), "text", EmbeddingVector::new(r.clone()).unwrap()).unwrap();
        }
        let got = index.top_k_vector(&EmbeddingVector::new(q.clone()).unwrap(), k).unwrap();
        let mut want: Vec<(u64, f64)> = rows.iter().enumerate().map(|(i, r)| (i as u64, cos(&q, r))).collect();
        want.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        want.truncate(k);
        prop_assert_eq!(got.hits.len(), want.len());
        for (h, (id, s)) in got.hits.iter().zip(&want) {
            prop_assert!((h.score - s).abs() <= 1e-12, "chunk {} vs {}", h.chunk_id, id);
        }
    }
}

#[test]
fn save_and_load_preserve_search() {
    let dir = tempfile::tempdir().unwrap();
    let e = HashEmbedder::default();
    let mut index = EmbeddingIndex::new(e.dim());
    for (i, text) in ["who directed Kismet", "what language is Kismet in", "when was Random Harvest released"]
        .iter()
        .enumerate()
    {
        index.add(&e, &format!("q{i}"), text, Default::default()).unwrap();
    }
    let path = dir.path().join("ix.bin");
    index.save(&path).unwrap();
    let back = EmbeddingIndex::load(&path).unwrap();
    assert_eq!(back.to_bytes(), index.to_bytes());
    let a = index.top_k(&e, "who directed Random Harvest", 3).unwrap();
    let b = back.top_k(&e, "who directed Random Harvest", 3).unwrap();
    assert_eq!(a.hits, b.hits);
}

#[test]
fn empty_index_reports_itself() {
    let index = EmbeddingIndex::new(3);
    let r = index.top_k_vector(&EmbeddingVector::new(vec![1.0, 0.0, 0.0]).unwrap(), 5).unwrap();
    assert!(r.hits.is_empty());
    assert!(r.empty_index);
}
