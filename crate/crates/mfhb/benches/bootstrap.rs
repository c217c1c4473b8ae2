//! Benchmarks of the bootstrap hot paths, comparing single-threaded and
//! multi-threaded execution of the same deterministic workload. With the
//! `parallel` feature off the two variants coincide.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use mfhb::engine::{builtin_cross_correlation, run_smooth, MfhbConfig};
use mfhb::harness::{monte_carlo_exact, CrossCorrelationSpec};
use mfhb::models::{generate, preset_model1};
use mfhb::rng::RngSeed;
use mfhb::with_threads;

fn bench_bootstrap_run(c: &mut Criterion) {
    let series = generate(&preset_model1(), 100, RngSeed(42)).unwrap().centered();
    let (spec, statistic) = builtin_cross_correlation(0, 0, 1);
    let cfg = MfhbConfig::new(0.10, 6, 300, RngSeed(7));

    let mut group = c.benchmark_group("bootstrap_run_n100_b300");
    group.bench_function("sequential", |b| {
        b.iter(|| {
            with_threads(Some(1), || {
                black_box(run_smooth(&series, &spec, &statistic, cfg).unwrap())
            })
        })
    });
    group.bench_function("parallel", |b| {
        b.iter(|| {
            with_threads(None, || {
                black_box(run_smooth(&series, &spec, &statistic, cfg).unwrap())
            })
        })
    });
    group.finish();
}

fn bench_reference_estimate(c: &mut Criterion) {
    let model = preset_model1();
    let stat = CrossCorrelationSpec { lag: 0, r: 0, s: 1 };

    let mut group = c.benchmark_group("reference_estimate_n100_r1000");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| {
            with_threads(Some(1), || {
                black_box(monte_carlo_exact(&model, 100, stat, 1000, RngSeed(3)).unwrap())
            })
        })
    });
    group.bench_function("parallel", |b| {
        b.iter(|| {
            with_threads(None, || {
                black_box(monte_carlo_exact(&model, 100, stat, 1000, RngSeed(3)).unwrap())
            })
        })
    });
    group.finish();
}

criterion_group!(benches, bench_bootstrap_run, bench_reference_estimate);
criterion_main!(benches);
