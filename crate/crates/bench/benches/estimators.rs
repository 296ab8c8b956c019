use bodyshape_bench::{income_design, small_cohort};
use bodyshape_core::econometrics::{
    bootstrap_inference, kernel_curve, lambda_grid, lambda_max, lasso_cd, lasso_cv, nadaraya_watson, ols_fit,
    quantile_grid, quantile_polyfit, KernelSpec,
};
use bodyshape_core::pipeline::{lasso_design, log_income};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn ols(c: &mut Criterion) {
    let mut g = c.benchmark_group("ols");
    for n in [500, 2000] {
        let (x, y) = income_design(&small_cohort(n, 1));
        g.bench_with_input(BenchmarkId::new("fit", n), &n, |b, _| {
            b.iter(|| ols_fit(black_box(&x), &y).unwrap())
        });
    }
    let (x, y) = income_design(&small_cohort(500, 1));
    g.sample_size(10);
    g.bench_function("bootstrap_b200", |b| {
        b.iter(|| bootstrap_inference(&x, &y, 200, 7).unwrap())
    });
    g.finish();
}

fn curves(c: &mut Criterion) {
    let s = small_cohort(2000, 2).subjects;
    let x: Vec<f64> = s.iter().map(|r| r.measures.weight).collect();
    let y: Vec<f64> = s.iter().map(|r| r.weight_error()).collect();
    let grid = quantile_grid(&x, 0.05, 0.95, 50);
    let spec = KernelSpec::silverman(&x).unwrap();
    let mut g = c.benchmark_group("curves");
    g.bench_function("nadaraya_watson", |b| {
        b.iter(|| nadaraya_watson(&x, &y, black_box(&grid), spec).unwrap())
    });
    g.sample_size(10);
    g.bench_function("kernel_bootstrap_b100", |b| {
        b.iter(|| kernel_curve(&x, &y, &grid, spec, 100, 3).unwrap())
    });
    g.bench_function("quantile_cubic_median", |b| {
        b.iter(|| quantile_polyfit(&x, &y, 0.5, 3).unwrap())
    });
    g.finish();
}

fn lasso(c: &mut Criterion) {
    let s = small_cohort(500, 3).subjects;
    let (z, y) = (lasso_design(&s).unwrap(), log_income(&s));
    let lmax = lambda_max(&z, &y).unwrap();
    let grid = lambda_grid(lmax, 30, 1e-3);
    let mut g = c.benchmark_group("lasso");
    g.bench_function("cd_single_lambda", |b| {
        b.iter(|| lasso_cd(&z, &y, black_box(0.05 * lmax)).unwrap())
    });
    g.sample_size(10);
    g.bench_function("cv_10fold_30lambda", |b| {
        b.iter(|| lasso_cv(&z, &y, &grid, 10, 5).unwrap())
    });
    g.finish();
}

criterion_group!(benches, ols, curves, lasso);
criterion_main!(benches);
