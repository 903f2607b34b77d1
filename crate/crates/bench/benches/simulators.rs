use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use kingman_bench::{fixture_rng, fixture_state, fixture_tree};
use kingman_core::{bd_pmf, enumerate_chains, sample_kingman};

fn genealogies(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_kingman");
    for n in [100, 1000, 10_000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            let mut rng = fixture_rng(1);
            b.iter(|| sample_kingman(n, &mut rng).unwrap());
        });
    }
    group.finish();

    let tree = fixture_tree(2000);
    c.bench_function("branch_summaries/2000", |b| {
        b.iter(|| tree.branch_summaries())
    });
}

fn moran(c: &mut Criterion) {
    let mut group = c.benchmark_group("evolve_one_generation");
    for n in [200, 2000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            let mut rng = fixture_rng(2);
            b.iter_batched(
                || fixture_state(n),
                |mut s| s.advance(1.0, &mut rng),
                BatchSize::LargeInput,
            );
        });
    }
    group.finish();
}

fn exact(c: &mut Criterion) {
    c.bench_function("enumerate_chains/6", |b| {
        b.iter(|| enumerate_chains(6).unwrap())
    });
    c.bench_function("bd_pmf/i=5,h=2", |b| {
        b.iter(|| bd_pmf(5, 2.0, None).unwrap())
    });
}

criterion_group!(benches, genealogies, moran, exact);
criterion_main!(benches);
