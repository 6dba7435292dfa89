use std::hint::black_box;

use byzcast_bench::{fault_free, sampled, torus};
use byzcast_core::experiments::{mix_seed, trial};
use byzcast_core::{check_safety, find_disjoint_bounded_paths, reliable_set, NodeId, Setting};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn witness_search(c: &mut Criterion) {
    let topology = torus(50);
    let mut group = c.benchmark_group("find_disjoint_bounded_paths");
    for (name, setting) in Setting::presets() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &setting, |b, s| {
            let targets = [NodeId(0), NodeId(2), NodeId(100), NodeId(52), NodeId(150)];
            b.iter(|| {
                find_disjoint_bounded_paths(
                    &topology,
                    black_box(NodeId(51)),
                    s.bounds(),
                    |n| targets.contains(&n),
                    |_| true,
                )
            })
        });
    }
    group.finish();
}

fn closure(c: &mut Criterion) {
    let topology = torus(50);
    let scenario = fault_free(&topology);
    let mut group = c.benchmark_group("reliable_set_50x50");
    group.sample_size(10);
    for (name, setting) in Setting::presets() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &setting, |b, s| {
            b.iter(|| reliable_set(black_box(&scenario), s).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo_trial(c: &mut Criterion) {
    let topology = torus(50);
    let setting: Setting = "1,3,3".parse().unwrap();
    let scenarios: Vec<_> = (0..16).map(|s| sampled(&topology, 2e-3, s)).collect();
    c.bench_function("trial_50x50_C_2e-3", |b| {
        let mut i = 0u64;
        b.iter(|| {
            i += 1;
            let sc = &scenarios[(i % 16) as usize];
            trial(sc, &setting, mix_seed(i, 1, 0))
        })
    });
    c.bench_function("check_safety_50x50_C_2e-2", |b| {
        let sc = sampled(&topology, 2e-2, 3);
        b.iter(|| check_safety(black_box(&sc), &setting))
    });
}

criterion_group!(benches, witness_search, closure, monte_carlo_trial);
criterion_main!(benches);
