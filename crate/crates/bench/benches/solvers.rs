use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use r4_bench::{model_one, model_three};
use r4_core::thresholding::verify_threshold_identity;
use r4_core::{
    fit_path, multistart_fit, r4_fit, rrr_fit, GridKind, GridSpec, OutlierSpec, R4Problem, RuleKind, SolverOptions,
    ThresholdRule,
};

fn thresholding(c: &mut Criterion) {
    let rule = ThresholdRule::soft(1.0);
    c.bench_function("threshold_identity_200", |b| {
        b.iter(|| (0..200).map(|k| verify_threshold_identity(&rule, -10.0 + 0.1 * k as f64)).sum::<f64>())
    });
}

fn reduced_rank(c: &mut Criterion) {
    let small = model_one(0.05, 0);
    let large = model_three(0.1, 0);
    c.bench_function("rrr_fit_model_one", |b| b.iter(|| rrr_fit(black_box(&small), 3).unwrap()));
    c.bench_function("rrr_fit_model_three", |b| b.iter(|| rrr_fit(black_box(&large), 3).unwrap()));
}

fn solver(c: &mut Criterion) {
    let data = model_one(0.05, 0);
    let problem = R4Problem::new(data, 3, OutlierSpec::PenalizedRowwise(ThresholdRule::hard(6.0))).unwrap();
    c.bench_function("r4_fit_hard_model_one", |b| b.iter(|| r4_fit(&problem, &SolverOptions::default()).unwrap()));
    let opts = SolverOptions { multistart: 5, ..Default::default() };
    c.bench_function("multistart_fit_5_model_one", |b| b.iter(|| multistart_fit(&problem, &opts).unwrap()));
}

fn path(c: &mut Criterion) {
    let data = model_one(0.05, 0);
    let mut grid = GridSpec::new(vec![2, 3, 4], GridKind::Penalized { rule: RuleKind::Hard, elementwise: false });
    grid.lambda_count = 30;
    grid.retain_fits = false;
    let mut group = c.benchmark_group("path");
    group.sample_size(10);
    group.bench_function("fit_path_3x30_model_one", |b| {
        b.iter(|| fit_path(&data, &grid, &SolverOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, thresholding, reduced_rank, solver, path);
criterion_main!(benches);
