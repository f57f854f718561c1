use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use sqdkit::coupon::{expected_shots_integral, expected_shots_lower_bound, AmplitudeDistribution};
use sqdkit::determinant::{enumerate_fci_space, project_hamiltonian};
use sqdkit::eigen::{davidson_lowest_eigenpair, dense_lowest_eigenpair, DavidsonOptions, DenseSymmetric};
use sqdkit::pauli::{build_qubit_hamiltonian, DEFAULT_CUTOFF};
use sqdkit::sampling::sample_shots;
use sqdkit::statevector::{fci_ground_state, CompiledHamiltonian};
use sqdkit::NoiseModel;
use sqdkit_bench::water;

fn projection(c: &mut Criterion) {
    let ints = water();
    let space = enumerate_fci_space(6, 4, 4).unwrap();
    c.bench_function("project water 225", |b| b.iter(|| project_hamiltonian(black_box(&space), &ints).unwrap()));
    c.bench_function("jordan-wigner water", |b| b.iter(|| build_qubit_hamiltonian(black_box(&ints), DEFAULT_CUTOFF).unwrap()));
}

fn eigensolvers(c: &mut Criterion) {
    let ints = water();
    let space = enumerate_fci_space(6, 4, 4).unwrap();
    let h = project_hamiltonian(&space, &ints).unwrap();
    let dense = DenseSymmetric::new(h.dim(), h.to_dense()).unwrap();
    let opts = DavidsonOptions::default();
    c.bench_function("davidson water 225", |b| b.iter(|| davidson_lowest_eigenpair(black_box(&h), None, &opts).unwrap()));
    c.bench_function("dense water 225", |b| b.iter(|| dense_lowest_eigenpair(black_box(&dense)).unwrap()));
}

fn sampling(c: &mut Criterion) {
    let ints = water();
    let g = fci_ground_state(&ints).unwrap();
    let noise = NoiseModel::default();
    let mut group = c.benchmark_group("sample water");
    for shots in [1_000usize, 100_000] {
        group.bench_with_input(BenchmarkId::new("ideal", shots), &shots, |b, &n| {
            b.iter(|| sample_shots(&g.state, n, None, 1).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("readout noise", shots), &shots, |b, &n| {
            b.iter(|| sample_shots(&g.state, n, Some(&noise), 1).unwrap())
        });
    }
    group.finish();
    let h = build_qubit_hamiltonian(&ints, DEFAULT_CUTOFF).unwrap();
    let compiled = CompiledHamiltonian::new(&h).unwrap();
    c.bench_function("expectation water", |b| b.iter(|| compiled.expectation(black_box(&g.state)).unwrap()));
}

fn coupon(c: &mut Criterion) {
    let p = AmplitudeDistribution::skewed(200, 0.972).unwrap();
    c.bench_function("lower bound m=200", |b| b.iter(|| expected_shots_lower_bound(black_box(&p)).unwrap()));
    c.bench_function("integral m=200", |b| b.iter(|| expected_shots_integral(black_box(&p)).unwrap()));
}

criterion_group!(benches, projection, eigensolvers, sampling, coupon);
criterion_main!(benches);
