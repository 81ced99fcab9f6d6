use std::hint::black_box;

use bell_lab_bench::product_models;
use bell_lab_core::audit::{check_bell_locality, check_signal_locality};
use bell_lab_core::bell::local_polytope_membership;
use bell_lab_core::generate::{eight_pattern_model, singlet_chsh_model};
use bell_lab_core::model::behavior;
use bell_lab_core::montecarlo::{run_experiment, SettingPolicy};
use bell_lab_core::DEFAULT_TOL;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn locality(c: &mut Criterion) {
    let mut group = c.benchmark_group("locality");
    for states in [4, 32] {
        let model = &product_models(1, 1, 3, states, true)[0];
        group.bench_with_input(BenchmarkId::new("bell_exact", states), model, |b, m| {
            b.iter(|| check_bell_locality(black_box(m), DEFAULT_TOL).unwrap())
        });
        let model = &product_models(1, 1, 3, states, false)[0];
        group.bench_with_input(BenchmarkId::new("bell_f64", states), model, |b, m| {
            b.iter(|| check_bell_locality(black_box(m), DEFAULT_TOL).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("signal_f64", states), model, |b, m| {
            b.iter(|| check_signal_locality(black_box(m), DEFAULT_TOL).unwrap())
        });
    }
    group.finish();
}

fn membership(c: &mut Criterion) {
    let mut group = c.benchmark_group("membership");
    group.sample_size(20);
    let cases = [
        ("singlet_2x2", singlet_chsh_model().unwrap()),
        ("eight_pattern_3x3", eight_pattern_model()),
        ("product_4x4_exact", product_models(2, 1, 4, 6, true).remove(0)),
        ("product_4x4_f64", product_models(2, 1, 4, 6, false).remove(0)),
    ];
    for (name, model) in &cases {
        let beh = behavior(model, DEFAULT_TOL).unwrap();
        group.bench_function(*name, |b| {
            b.iter(|| local_polytope_membership(black_box(&beh), &model.scenario, DEFAULT_TOL).unwrap())
        });
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    let model = singlet_chsh_model().unwrap();
    for trials in [10_000u64, 100_000] {
        group.throughput(Throughput::Elements(trials));
        group.bench_with_input(BenchmarkId::new("singlet", trials), &trials, |b, &n| {
            b.iter(|| run_experiment(&model, n, 7, &SettingPolicy::Uniform, DEFAULT_TOL).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, locality, membership, simulation);
criterion_main!(benches);
