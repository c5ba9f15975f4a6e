use std::hint::black_box;

use agentspace::distances::{local_distance_mc, mc_horizon, ActionMetric};
use agentspace::oracle::{enumerate_paths, exact_local_distance, occupancy};
use agentspace::RewardSpec;
use agentspace_bench::fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const TV: ActionMetric = ActionMetric::TotalVariation;

fn exact(c: &mut Criterion) {
    let spec = RewardSpec::new(0.9).unwrap();
    let mut group = c.benchmark_group("exact_local_distance");
    for n in [4, 32, 128] {
        let (p, [v, b, d]) = fixture(n, 4, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| exact_local_distance(black_box(&v), &b, &d, &p, &spec, TV, 1e-10).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let spec = RewardSpec::new(0.9).unwrap();
    let (p, [v, b, d]) = fixture(32, 4, 2);
    let horizon = mc_horizon(&spec, TV, 1e-3);
    c.bench_function("local_distance_mc/32x4/1000", |bench| {
        bench.iter(|| local_distance_mc(&v, &b, &d, &p, &spec, TV, horizon, 1000, black_box(7)).unwrap())
    });
}

fn oracles(c: &mut Criterion) {
    let spec = RewardSpec::new(0.9).unwrap();
    let (p, [v, ..]) = fixture(32, 4, 3);
    c.bench_function("occupancy/32x4", |bench| bench.iter(|| occupancy(&p, black_box(&v), &spec, 1e-10).unwrap()));
    let (small, [a, ..]) = fixture(3, 2, 4);
    c.bench_function("enumerate_paths/3x2/t=5", |bench| bench.iter(|| enumerate_paths(&small, black_box(&a), 5).unwrap()));
}

criterion_group!(benches, exact, monte_carlo, oracles);
criterion_main!(benches);
