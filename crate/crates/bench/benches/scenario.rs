use criterion::{criterion_group, criterion_main, Criterion};
use vsn_bench::scenario;
use vsn_core::harness::run_iteration;

fn scenarios(c: &mut Criterion) {
    let fire = scenario("fire.json");
    let mixed = scenario("mixed.json");
    let mut group = c.benchmark_group("iteration");
    group.sample_size(10);
    group.bench_function("fire_virtualized", |b| {
        b.iter(|| run_iteration(&fire, 0, false).unwrap())
    });
    group.bench_function("fire_baseline", |b| {
        b.iter(|| run_iteration(&fire, 0, true).unwrap())
    });
    group.bench_function("mixed_virtualized", |b| {
        b.iter(|| run_iteration(&mixed, 0, false).unwrap())
    });
    group.finish();
}

criterion_group!(benches, scenarios);
criterion_main!(benches);
