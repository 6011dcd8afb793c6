use std::hint::black_box;

use contravul::eval::{average_precision, pca_project};
use contravul::explain::{aspect_flags, ranking_score, Answer, CueExtractor};
use contravul::seed;
use contravul::trainer::{build_pairs, contrastive_loss, loss_and_gradients, PairingStrategy};
use contravul_bench::{embeddings, scored_list, Fixture};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn encoder(c: &mut Criterion) {
    let fx = Fixture::new(PairingStrategy::RDrop, 8);
    let tokens = &fx.prepared[0].code;
    c.bench_function("encode/eval", |b| b.iter(|| fx.model.encode(black_box(tokens), None).unwrap()));
    c.bench_function("encode/dropout", |b| {
        b.iter(|| fx.model.encode(black_box(tokens), Some(seed::dropout_seed(1, "r", 0))).unwrap())
    });
}

fn training_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("loss_and_gradients");
    for strategy in [PairingStrategy::SimCL, PairingStrategy::SimDFE, PairingStrategy::RDrop] {
        for n in [8, 32] {
            let fx = Fixture::new(strategy, n);
            let batch = fx.batch();
            group.bench_with_input(BenchmarkId::new(strategy.to_string(), n), &batch, |b, batch| {
                b.iter(|| loss_and_gradients(&fx.model, &fx.head, batch, &fx.config, 7, 1.0, 1.0).unwrap())
            });
        }
    }
    group.finish();
}

fn triplet_loss(c: &mut Criterion) {
    let fx = Fixture::new(PairingStrategy::SimDFE, 32);
    let groups = build_pairs(&fx.records, PairingStrategy::SimDFE, &fx.model, 5).unwrap();
    c.bench_function("contrastive_loss/simdfe_32", |b| {
        b.iter(|| groups.iter().map(|g| contrastive_loss(black_box(g), 1.0)).sum::<f64>())
    });
}

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("average_precision");
    for n in [100, 10_000] {
        let xs = scored_list(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &xs, |b, xs| b.iter(|| average_precision(xs).unwrap()));
    }
    group.finish();

    let points = embeddings(500, 64);
    c.bench_function("pca_project/500x64", |b| b.iter(|| pca_project(black_box(&points)).unwrap()));
}

fn ranking(c: &mut Criterion) {
    let answer = Answer {
        answer_id: "a".into(),
        body: "It crashes because the length is never checked. This leads to memory corruption. \
               You should use strncpy instead."
            .into(),
        score: 4,
        accepted: true,
    };
    c.bench_function("aspect_flags", |b| b.iter(|| aspect_flags(black_box(&answer), &CueExtractor)));
    let flags = aspect_flags(&answer, &CueExtractor);
    c.bench_function("ranking_score", |b| {
        b.iter(|| ranking_score(black_box(0.8), 4, &[4, 2, 1, 0], flags, true))
    });
}

criterion_group!(benches, encoder, training_step, triplet_loss, metrics, ranking);
criterion_main!(benches);
