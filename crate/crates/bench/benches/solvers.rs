//! Benchmarks for assembly and the iterative solves on cell problems.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use porohom::coeffs::CoefficientField;
use porohom::fem::{assemble_vector_elliptic, solve_spd, DofMap, SolveOpts};
use porohom::geometry::{build_cell, mesh_cell, CellShape};
use porohom::homogenize::{assemble_effective, solve_elastic_cell, CellInputs, CellLoad};

fn bench_assembly_and_cg(c: &mut Criterion) {
    let geom = build_cell(2, CellShape::Disk { center: vec![0.5, 0.5], radius: 0.25 }).unwrap();
    let mut group = c.benchmark_group("periodic_poisson");
    for res in [32usize, 64] {
        let mesh = mesh_cell(&geom, res).unwrap();
        let coeff: Vec<f64> = (0..mesh.n_cells()).flat_map(|_| [1.0, 0.0, 0.0, 1.0]).collect();
        let map = DofMap::all(mesh.n_nodes(), 1);
        group.bench_with_input(BenchmarkId::new("assemble", res), &res, |b, _| {
            b.iter(|| assemble_vector_elliptic(black_box(&mesh), &map, &coeff, None).unwrap())
        });
        let a = assemble_vector_elliptic(&mesh, &map, &coeff, None).unwrap();
        let h = 1.0 / res as f64;
        let rhs: Vec<f64> = (0..mesh.n_nodes())
            .map(|n| {
                let y = mesh.node_coords(n);
                h * h * (std::f64::consts::TAU * y[0]).sin()
            })
            .collect();
        let opts = SolveOpts { tol: 1e-10, max_iter: 50_000, zero_mean_comps: Some(1) };
        group.bench_with_input(BenchmarkId::new("cg", res), &res, |b, _| {
            b.iter(|| solve_spd(black_box(&a), black_box(&rhs), &opts).unwrap())
        });
    }
    group.finish();
}

fn bench_cell_problems(c: &mut Criterion) {
    let geom = build_cell(2, CellShape::Disk { center: vec![0.5, 0.5], radius: 0.25 }).unwrap();
    let inputs = CellInputs::memoryless(
        2,
        CoefficientField::constant_isotropic(2, 4.0),
        CoefficientField::constant_isotropic(2, 1.0),
    );
    let mut group = c.benchmark_group("cell_problems");
    group.sample_size(10);
    let mesh = mesh_cell(&geom, 32).unwrap();
    group.bench_function("elastic_corrector_32", |b| {
        b.iter(|| {
            solve_elastic_cell(black_box(&geom), &mesh, &inputs, &CellLoad::unit(2, 0, 0)).unwrap()
        })
    });
    group.bench_function("effective_model_32", |b| {
        b.iter(|| assemble_effective(black_box(&geom), &mesh, &inputs, 1).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_assembly_and_cg, bench_cell_problems);
criterion_main!(benches);
