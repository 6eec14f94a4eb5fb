use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kgqa_core::embed::{EmbeddingIndex, EmbeddingVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 256;

fn vector(rng: &mut ChaCha8Rng) -> EmbeddingVector {
    EmbeddingVector::new((0..DIM).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn top_k(c: &mut Criterion) {
    let mut group = c.benchmark_group("top_k");
    for &n in &[1_000usize, 10_000] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut index = EmbeddingIndex::new(DIM);
        for i in 0..n {
            index.insert(&format!("d{i}"), "text", vector(&mut rng)).unwrap();
        }
        let queries: Vec<EmbeddingVector> = (0..32).map(|_| vector(&mut rng)).collect();
        for &k in &[1usize, 10] {
            group.bench_with_input(BenchmarkId::new(format!("k{k}"), n), &n, |b, _| {
                let mut i = 0;
                b.iter(|| {
                    i = (i + 1) % queries.len();
                    black_box(index.top_k_vector(&queries[i], k).unwrap())
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, top_k);
criterion_main!(benches);
