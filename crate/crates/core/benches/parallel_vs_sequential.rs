use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use exdr_core::backend::Embedding;
use exdr_core::confidence::ConfidenceTriple;
use exdr_core::index::{build_index, query_topk_with, IndexRecord};
use exdr_core::model::{CorpusEntry, FineGrainedLabel, ImageRef};
use exdr_core::trigger::{hybrid_search_with, CacheRecord, SearchConfig, ValidationCache};
use exdr_core::{Execution, FixtureBackend};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn cache(n: usize) -> ValidationCache {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let records = (0..n)
        .map(|i| CacheRecord {
            sample_id: format!("v{i:05}"),
            confidence: ConfidenceTriple { tau_label: rng.gen(), tau_tok: rng.gen(), tau_sent: rng.gen() },
            correct_plain: rng.gen_bool(0.7),
            correct_aug: rng.gen_bool(0.8),
        })
        .collect();
    ValidationCache::new(records).unwrap()
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Embedding::new(v).unwrap().normalized().unwrap()
}

fn records(n: usize, dim: usize) -> Vec<IndexRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    (0..n)
        .map(|i| {
            let fine = FineGrainedLabel::ALL[i % 6];
            IndexRecord { corpus_id: format!("c{i:06}"), fused: unit(&mut rng, dim), fine_label: fine, binary_label: fine.binary() }
        })
        .collect()
}

fn corpus(n: usize) -> Vec<CorpusEntry> {
    (0..n)
        .map(|i| CorpusEntry {
            id: format!("c{i:04}"),
            image: ImageRef::Path(format!("corpus/{i}.jpg")),
            text: format!("Claim {i} about Geneva and Reuters"),
            explanation: format!("Explanation {i} cites Lisbon."),
            fine_label: FineGrainedLabel::ALL[i % 6],
        })
        .collect()
}

fn bench_search(c: &mut Criterion) {
    let mut g = c.benchmark_group("hybrid_search");
    for n in [500, 5000] {
        let cache = cache(n);
        let cfg = SearchConfig::default();
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, n), &cache, |b, cache| {
                b.iter(|| hybrid_search_with(black_box(cache), &cfg, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn bench_topk(c: &mut Criterion) {
    let mut g = c.benchmark_group("query_topk");
    let q = unit(&mut ChaCha8Rng::seed_from_u64(3), 512);
    for n in [1_000, 20_000] {
        let index = records(n, 512);
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, n), &index, |b, index| {
                b.iter(|| query_topk_with(black_box(index), &q, 10, |_| true, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn bench_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_index");
    g.sample_size(20);
    let backend = FixtureBackend::synthetic(256, 128);
    let corpus = corpus(400);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, corpus.len()), |b| b.iter(|| build_index(black_box(&corpus), &backend, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, bench_search, bench_topk, bench_build);
criterion_main!(benches);
