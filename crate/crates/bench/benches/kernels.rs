// cargo bench -p cwp-bench -- --save-baseline main

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use cwp_bench::{high_temperature, UNIFORM3};
use cwp_core::free_energy::{find_minimizers, PhasePoint};
use cwp_core::sampler::ChainState;
use cwp_core::stein::pair_moments_from_counts;
use cwp_core::exact_law;

fn bench_exact_law(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_law");
    for n in [100, 400] {
        let params = high_temperature(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &params, |b, p| {
            b.iter(|| exact_law(black_box(p)).unwrap())
        });
    }
    group.finish();
}

fn bench_gibbs_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("gibbs_sweep");
    for n in [1_000, 10_000] {
        let mut chain = ChainState::new(high_temperature(n), &UNIFORM3, 0, 0).unwrap();
        group.bench_function(BenchmarkId::from_parameter(n), |b| b.iter(|| chain.gibbs_sweep()));
    }
    group.finish();
}

fn bench_find_minimizers(c: &mut Criterion) {
    let points = [
        ("unique", PhasePoint::new(3, 2.0, 0.0).unwrap()),
        ("q_fold", PhasePoint::new(4, 4.0, 0.0).unwrap()),
        ("extremity", PhasePoint::extremity(3).unwrap()),
    ];
    let mut group = c.benchmark_group("find_minimizers");
    for (name, p) in &points {
        group.bench_function(*name, |b| b.iter(|| find_minimizers(black_box(p))));
    }
    group.finish();
}

fn bench_pair_moments(c: &mut Criterion) {
    let params = high_temperature(600);
    let counts = [210u32, 190, 200];
    c.bench_function("pair_moments_from_counts", |b| {
        b.iter(|| pair_moments_from_counts(black_box(&params), black_box(&counts)))
    });
}

criterion_group!(
    benches,
    bench_exact_law,
    bench_gibbs_sweep,
    bench_find_minimizers,
    bench_pair_moments
);
criterion_main!(benches);
