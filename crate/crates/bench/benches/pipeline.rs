use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use netchoice_bench::event_logs;
use netchoice_core::choices::sample_eligible;
use netchoice_core::ingest::project_to_author_edges;
use netchoice_core::initiations::classify_initiations;
use netchoice_core::seeds::rng_for;
use netchoice_core::{AuthorId, TemporalGraph};

fn projection(c: &mut Criterion) {
    let (events, updates) = event_logs(200_000, 5_000, 1);
    let mut group = c.benchmark_group("network");
    group.throughput(Throughput::Elements(events.len() as u64));
    group.sample_size(10);
    group.bench_function("project_200k", |b| b.iter(|| project_to_author_edges(&events, &updates).unwrap()));
    let directed = project_to_author_edges(&events, &updates).unwrap();
    group.bench_function("build_graph_200k", |b| {
        b.iter(|| TemporalGraph::build_with_activity(&directed, &updates))
    });
    let graph = TemporalGraph::build_with_activity(&directed, &updates);
    group.bench_function("classify_initiations", |b| b.iter(|| classify_initiations(&graph)));
    group.bench_function("replay_to_end", |b| {
        b.iter_batched(
            || graph.clone(),
            |mut g| {
                g.advance_to_end().unwrap();
                g.state().n_activated()
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let universe: Vec<AuthorId> = (0..100_000).map(AuthorId).collect();
    let mut rng = rng_for(7, 0);
    c.bench_function("sample_24_of_100k", |b| {
        b.iter(|| sample_eligible(&universe, |a| a.0 % 3 != 0, 66_666, 24, &mut rng))
    });
}

criterion_group!(benches, projection, sampling);
criterion_main!(benches);
