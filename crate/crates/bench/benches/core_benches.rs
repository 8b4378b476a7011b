//! Benchmarks for the hot paths: the flow field, the integrator, the Jacobi
//! eigendecomposition, and the modal field.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use sal_bench::{bench_configuration, bench_spectrum, bench_symmetric};
use sal_core::dynamics::{integrate, vector_field};
use sal_core::modal::{modal_field, ModalCoordinates};
use sal_core::spectral::Spectrum;

fn field_evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("vector_field");
    let spectrum = bench_spectrum();
    for n in [8usize, 80] {
        let cfg = bench_configuration(n, 3, 1.0, 42);
        group.bench_with_input(BenchmarkId::from_parameter(n), &cfg, |b, cfg| {
            b.iter(|| vector_field(black_box(cfg), black_box(&spectrum)).unwrap());
        });
    }
    group.finish();
}

fn integration_step(c: &mut Criterion) {
    let spectrum = bench_spectrum();
    let cfg = bench_configuration(80, 3, 1.0, 7);
    c.bench_function("integrate_n80_t1", |b| {
        b.iter(|| integrate(black_box(&cfg), black_box(&spectrum), 1.0, 1e-2, 100).unwrap());
    });
}

fn eigendecomposition(c: &mut Criterion) {
    let mut group = c.benchmark_group("jacobi_decompose");
    for d in [4usize, 16, 64] {
        let m = bench_symmetric(d, 11);
        group.bench_with_input(BenchmarkId::from_parameter(d), &m, |b, m| {
            b.iter(|| Spectrum::decompose_symmetric(black_box(m)).unwrap());
        });
    }
    group.finish();
}

fn modal_evaluation(c: &mut Criterion) {
    let spectrum = bench_spectrum();
    let cfg = bench_configuration(80, 3, 1.0, 13);
    let coords = ModalCoordinates::from_configuration(&cfg, &spectrum).unwrap();
    c.bench_function("modal_field_n80", |b| {
        b.iter(|| modal_field(black_box(&coords), black_box(1.0)).unwrap());
    });
}

criterion_group!(
    benches,
    field_evaluation,
    integration_step,
    eigendecomposition,
    modal_evaluation
);
criterion_main!(benches);
