use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hetflow::sweep::{fd_sweep, linspace};
use hetflow::{Domain, Execution, ObstacleField};

fn sweep(c: &mut Criterion) {
    let dom = Domain::ring(120.0).unwrap();
    let z = ObstacleField::new(dom, (0..40).map(|k| 3.0 * k as f64).collect(), 1.0).unwrap();
    let densities = linspace(&0.1, &2.0, 8).unwrap();
    let mut group = c.benchmark_group("fd_sweep");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| fd_sweep(&z, &densities, 500, 50, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
