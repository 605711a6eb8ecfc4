use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use std::hint::black_box;

use pnavier::basis::build_stream_basis;
use pnavier::field::Discretization;
use pnavier::galerkin::{assemble, assemble_action, Model};
use pnavier::par::Execution;
use pnavier::quadrature::QuadratureRule;

fn setup(n_per_axis: usize, order: usize) -> (Discretization, DVector<f64>) {
    let basis = build_stream_basis(n_per_axis, true).unwrap();
    let disc = Discretization::new(basis, QuadratureRule::new(order).unwrap());
    let n = disc.dim();
    let x = DVector::from_fn(n, |i, _| 1.0 / (1.0 + i as f64));
    (disc, x)
}

fn bench_assembly(c: &mut Criterion) {
    let model = Model::new(3.0, 0.1).unwrap();
    let mut group = c.benchmark_group("assemble");
    for &(n, order) in &[(3usize, 48usize), (4, 96), (5, 96)] {
        let (disc, x) = setup(n, order);
        let label = format!("N{}-q{}", n * n, order);
        for exec in [Execution::Sequential, Execution::Parallel] {
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), &label), &exec, |b, &exec| {
                b.iter(|| assemble(black_box(&disc), black_box(&x), &model, exec).unwrap())
            });
        }
    }
    group.finish();

    let mut group = c.benchmark_group("action");
    let (disc, x) = setup(4, 96);
    let d = x.map(|v| 1e-3 * v);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| assemble_action(black_box(&disc), black_box(&x), &[&d], &model, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_assembly
}
criterion_main!(benches);
