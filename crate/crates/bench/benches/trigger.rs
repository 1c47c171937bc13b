use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use selftrig::trigger::solve_hold_inequality;
use selftrig::{oracle_root, run_scenario, M2Mode, Sampler, Scenario, StateVector};
use selftrig_bench::{example1_certificate, example1_policy};

fn hold_solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("hold_solver");
    group.bench_function("closed_form", |b| {
        b.iter(|| solve_hold_inequality(black_box(2.3e-6), black_box(4.1e-9), black_box(5.2e-6), 1e3))
    });
    group.bench_function("bisection", |b| {
        b.iter(|| oracle_root(black_box(2.3e-6), black_box(4.1e-9), black_box(5.2e-6), 1e-12))
    });
    group.finish();
}

fn next_sample_time(c: &mut Criterion) {
    let x_k = StateVector::new(vec![4e-5, -3e-5]).unwrap();
    let mut group = c.benchmark_group("next_sample_time");
    for (label, mode) in [("global", M2Mode::Global), ("level_set", M2Mode::LevelSet)] {
        let policy = example1_policy(0.99, 0.009, mode).precompute().unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(label), &x_k, |b, x| {
            b.iter(|| policy.next_sample_time(black_box(x)).unwrap())
        });
    }
    group.finish();
}

fn precompute(c: &mut Criterion) {
    let mut group = c.benchmark_group("precompute");
    group.sample_size(10);
    for (label, mode) in [("global", M2Mode::Global), ("level_set", M2Mode::LevelSet)] {
        group.bench_function(label, |b| {
            b.iter(|| example1_policy(0.99, 0.009, mode).precompute().unwrap())
        });
    }
    group.finish();
}

fn closed_loop(c: &mut Criterion) {
    let policy = example1_policy(0.99, 0.009, M2Mode::LevelSet).precompute().unwrap();
    let (sys, fb) = selftrig::systems::example1();
    let x0 = StateVector::new(vec![1e-5, 1e-5]).unwrap();
    let scenario = Scenario::new(
        sys,
        fb,
        example1_certificate(),
        Sampler::SelfTriggered(Box::new(policy)),
        x0,
        50.0,
    );
    let mut group = c.benchmark_group("run_scenario");
    group.sample_size(10);
    group.bench_function("example1_50s", |b| b.iter(|| run_scenario(black_box(&scenario)).unwrap()));
    group.finish();
}

criterion_group!(benches, hold_solver, next_sample_time, precompute, closed_loop);
criterion_main!(benches);
