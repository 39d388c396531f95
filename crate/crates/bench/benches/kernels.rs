//! Microbenchmarks for the almost-periodic and memory kernels.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use porohom::ap::{torus_convolve, GridFn};
use porohom::memory::{volterra_convolve, FieldHistory};

fn bench_torus_convolve(c: &mut Criterion) {
    let mut group = c.benchmark_group("torus_convolve");
    for n in [64usize, 128, 256] {
        let u = GridFn::sample(vec![n, n], |y| (std::f64::consts::TAU * y[0]).cos()).unwrap();
        let v = GridFn::sample(vec![n, n], |y| (std::f64::consts::TAU * y[1]).sin() + 0.5).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| torus_convolve(black_box(&u), black_box(&v)).unwrap())
        });
    }
    group.finish();
}

fn bench_volterra(c: &mut Criterion) {
    let mut group = c.benchmark_group("volterra_convolve");
    for steps in [128usize, 512] {
        let dt = 1.0 / steps as f64;
        let mut hist = FieldHistory::new(dt);
        for j in 0..=steps {
            hist.push(vec![(j as f64 * dt).sin(); 256]);
        }
        let kernel: Vec<f64> = (0..=steps).map(|j| (-(j as f64) * dt).exp()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(steps), &steps, |b, _| {
            b.iter(|| volterra_convolve(black_box(&kernel), black_box(&hist), steps).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_torus_convolve, bench_volterra);
criterion_main!(benches);
