use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use llmq_bench::{requests, text_index};
use llmq_core::scheduler::{Scheduler, SchedulerConfig};
use llmq_core::sql::parse;
use llmq_core::vector::{mock_embedding, GraphParams, IndexStrategy};
use llmq_core::{suite, MockBackend};

fn scheduler(c: &mut Criterion) {
    let mut group = c.benchmark_group("scheduler");
    let backend = MockBackend::faithful();
    for window in [1, 8, 32] {
        let config = SchedulerConfig { window, ..SchedulerConfig::default() };
        group.bench_with_input(BenchmarkId::new("submit_1000", window), &config, |b, config| {
            b.iter(|| Scheduler::new(&backend, config.clone()).unwrap().submit(requests(1000)).unwrap())
        });
    }
    group.finish();
}

fn vector_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("vector");
    let query = mock_embedding("passage 17 about topic 17", 64, 1);
    let exact = text_index(5000, 64, IndexStrategy::ExactScan);
    let graph = text_index(5000, 64, IndexStrategy::Graph(GraphParams::default()));
    group.bench_function("exact_top10", |b| b.iter(|| exact.top_k(&query, 10).unwrap()));
    group.bench_function("graph_top10", |b| b.iter(|| graph.top_k(&query, 10).unwrap()));
    group.sample_size(10);
    group.bench_function("graph_build_2000", |b| {
        b.iter(|| text_index(2000, 64, IndexStrategy::Graph(GraphParams::default())))
    });
    group.finish();
}

fn parsing(c: &mut Criterion) {
    c.bench_function("parse_suite", |b| {
        b.iter(|| suite::QUERIES.iter().map(|(_, q)| parse(q).unwrap()).collect::<Vec<_>>())
    });
}

criterion_group!(benches, scheduler, vector_search, parsing);
criterion_main!(benches);
