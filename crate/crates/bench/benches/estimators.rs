use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ordinal_did::bootstrap::BootstrapSpec;
use ordinal_did::equivalence::{fit_pretreatment, pointwise_bands, t_grid, GridSpec, ThetaCovariance};
use ordinal_did::normal::{norm_cdf, norm_quantile};
use ordinal_did::{estimate_pipeline, estimate_with_bootstrap, fit_covariate_model};
use ordinal_did_bench::panel;

fn normal(c: &mut Criterion) {
    let ps: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
    c.bench_function("norm_quantile x999", |b| {
        b.iter(|| ps.iter().map(|&p| norm_quantile(black_box(p)).unwrap()).sum::<f64>())
    });
    c.bench_function("norm_cdf x999", |b| {
        b.iter(|| ps.iter().map(|&p| norm_cdf(black_box(p * 8.0 - 4.0))).sum::<f64>())
    });
}

fn fitting(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate_pipeline");
    for j in [3, 5, 7] {
        let (spec, data) = panel(j, 5000);
        group.bench_with_input(BenchmarkId::from_parameter(j), &j, |b, _| {
            b.iter(|| estimate_pipeline(black_box(&data), &spec.anchor()).unwrap())
        });
    }
    group.finish();
}

fn bootstrap(c: &mut Criterion) {
    let (spec, data) = panel(3, 1000);
    let boot = BootstrapSpec {
        n_reps: 100,
        seed: 1,
        alpha_levels: vec![0.10],
    };
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(10);
    group.bench_function("100 replicates, n=1000", |b| {
        b.iter(|| estimate_with_bootstrap(&data, &spec.anchor(), &boot).unwrap())
    });
    group.finish();
}

fn equivalence(c: &mut Criterion) {
    let (spec, data) = panel(3, 5000);
    let fit = fit_pretreatment(&data, &spec.anchor()).unwrap();
    let n = fit.n as f64;
    let omega = ThetaCovariance::from_fit(&fit, n).unwrap();
    c.bench_function("t grid with bands", |b| {
        b.iter(|| {
            let base = t_grid(&fit, &GridSpec::default()).unwrap();
            pointwise_bands(&base, &omega, n, 0.05).unwrap()
        })
    });
}

fn covariates(c: &mut Criterion) {
    let (spec, data) = panel(3, 2000);
    let mut group = c.benchmark_group("covariate_model");
    group.sample_size(10);
    group.bench_function("p=0, n=2000", |b| {
        b.iter(|| fit_covariate_model(&data, &spec.anchor()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, normal, fitting, bootstrap, equivalence, covariates);
criterion_main!(benches);
