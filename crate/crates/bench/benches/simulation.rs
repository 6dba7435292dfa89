use std::hint::black_box;

use byzcast_bench::{fault_free, torus};
use byzcast_core::{check_delivery, run, Adversary, NodeId, Setting, VisitedSet};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn fault_free_runs(c: &mut Criterion) {
    let topology = torus(10);
    let scenario = fault_free(&topology);
    let mut group = c.benchmark_group("simulate_10x10_torus");
    group.sample_size(10);
    for (name, setting) in Setting::presets() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &setting, |b, s| {
            b.iter(|| run(black_box(&scenario), s, &Adversary::Silent, 1, u64::MAX).unwrap())
        });
    }
    group.finish();
}

fn delivery_rule(c: &mut Criterion) {
    // Every set holds one of three "neighbors": no 4-packing exists.
    let rec: Vec<VisitedSet> = (0..300u32)
        .map(|i| [NodeId(i % 3), NodeId(10 + i), NodeId(1000 + i)].into_iter().collect())
        .collect();
    let d: Setting = "1,2,5,5".parse().unwrap();
    let c3: Setting = "3,3,3".parse().unwrap();
    c.bench_function("check_delivery_infeasible_D", |b| b.iter(|| check_delivery(black_box(&rec), &d)));
    c.bench_function("check_delivery_feasible_333", |b| b.iter(|| check_delivery(black_box(&rec), &c3)));
}

criterion_group!(benches, fault_free_runs, delivery_rule);
criterion_main!(benches);
