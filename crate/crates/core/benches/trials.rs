use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ewm_core::rng::stream;
use ewm_core::simulation::{calibrate_null, estimate_stopping_with, null_horizon};
use ewm_core::{optimal_evalue, AdversaryPolicy, Execution, ExperimentConfig, NeighborhoodSpec};

fn config(trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        spec: NeighborhoodSpec::from_weights(&[0.5, 0.5], 0.1).unwrap(),
        alphas: vec![1e-2, 1e-10, 1e-40],
        trials,
        policy: AdversaryPolicy::default(),
        horizon_cap: None,
        base_seed: 7,
    }
}

fn stopping_times(c: &mut Criterion) {
    let mut group = c.benchmark_group("stopping_times");
    group.sample_size(10);
    for trials in [1_000usize, 10_000] {
        let cfg = config(trials);
        for (label, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(label, trials), &cfg, |b, cfg| {
                b.iter(|| estimate_stopping_with(black_box(cfg), exec).unwrap())
            });
        }
    }
    group.finish();
}

fn null_streams(c: &mut Criterion) {
    let spec = NeighborhoodSpec::from_weights(&[0.4, 0.3, 0.3], 0.1).unwrap();
    let e = optimal_evalue(&spec);
    let horizon = null_horizon(&spec, 0.05);
    let mut group = c.benchmark_group("null_calibration");
    group.sample_size(10);
    for (label, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(label, |b| {
            b.iter(|| calibrate_null(&spec, &e, 0.05, 10_000, horizon, spec.anchor(), 11, exec).unwrap())
        });
    }
    group.finish();
}

fn saddle(c: &mut Criterion) {
    let spec = NeighborhoodSpec::from_weights(&[0.3, 0.25, 0.25, 0.2], 0.1).unwrap();
    c.bench_function("saddle_check_n4", |b| {
        b.iter(|| {
            let mut rng = stream(3);
            ewm_core::oracles::saddle_check(&spec, 200, 0.05, &mut rng).unwrap()
        })
    });
}

criterion_group!(benches, stopping_times, null_streams, saddle);
criterion_main!(benches);
