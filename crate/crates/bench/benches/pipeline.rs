use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qap_core::dynamics::{rhs, CoefficientState};
use qap_core::{
    eigenvalue, integrate, integrate_rk4, optimize, ActiveMask, IntegratorConfig, Method,
    OptimizeOptions,
};

fn bench_rhs(c: &mut Criterion) {
    let (spec, init) = qap_bench::quantum();
    let state = CoefficientState::initial(&init);
    c.bench_function("rhs", |b| {
        b.iter(|| rhs(black_box(&state), black_box(&spec)))
    });
}

fn bench_integrate(c: &mut Criterion) {
    let (spec, init) = qap_bench::quantum();
    let mut group = c.benchmark_group("integrate");
    for h in [1e-2, 1e-3] {
        group.bench_with_input(BenchmarkId::new("rk4", h), &h, |b, &h| {
            b.iter(|| integrate_rk4(&spec, black_box(&init), h).unwrap())
        });
    }
    let adaptive = IntegratorConfig::rk4(1e-2).with_method(Method::Rk4Adaptive);
    group.bench_function("rk4_adaptive", |b| {
        b.iter(|| integrate(&spec, black_box(&init), &adaptive).unwrap())
    });
    group.finish();
}

fn bench_eigenvalue(c: &mut Criterion) {
    let (spec, init) = qap_bench::classical();
    let grid = integrate_rk4(&spec, &init, 1e-3).unwrap();
    c.bench_function("eigenvalue", |b| {
        b.iter(|| eigenvalue(black_box(&grid)).unwrap())
    });
}

fn bench_optimize(c: &mut Criterion) {
    let (spec, init) = qap_bench::classical();
    let options = OptimizeOptions {
        active_mask: ActiveMask::S10_ONLY,
        integrator: IntegratorConfig::rk4(1e-2),
        ..OptimizeOptions::default()
    };
    let mut group = c.benchmark_group("optimize");
    group.sample_size(20);
    group.bench_function("classical_s10", |b| {
        b.iter(|| optimize(&spec, black_box(&init), &options).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_rhs,
    bench_integrate,
    bench_eigenvalue,
    bench_optimize
);
criterion_main!(benches);
