use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use symvi_core::diagnostics::epsilon_90_with;
use symvi_core::elbo::grad_elbo_with;
use symvi_core::families::{BaseDensity, LocationScaleApprox, Mode};
use symvi_core::linalg::PosDefMatrix;
use symvi_core::targets::make_multi_student_t;
use symvi_core::Exec;

fn policies() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn gradient(c: &mut Criterion) {
    let d = 10;
    let target = make_multi_student_t(10.0, &vec![0.0; d], &PosDefMatrix::equicorrelated(d, 0.9))
        .expect("valid target");
    let q = LocationScaleApprox::standard(BaseDensity::gaussian(d), Mode::FullRank);
    let mut group = c.benchmark_group("grad_elbo_d10");
    for n in [1_000usize, 10_000] {
        for (name, exec) in policies() {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| black_box(grad_elbo_with(&target, &q, n, 7, exec).expect("finite")))
            });
        }
    }
    group.finish();
}

fn reflection(c: &mut Criterion) {
    let d = 10;
    let target = make_multi_student_t(5.0, &vec![0.0; d], &PosDefMatrix::equicorrelated(d, 0.5))
        .expect("valid target");
    let draws = target.sample_exact(20_000, 3).expect("exact sampler");
    let mu = vec![0.0; d];
    let mut group = c.benchmark_group("epsilon_90_d10");
    for (name, exec) in policies() {
        group.bench_function(name, |b| {
            b.iter(|| black_box(epsilon_90_with(&target, &draws, &mu, exec).expect("report")))
        });
    }
    group.finish();
}

criterion_group!(benches, gradient, reflection);
criterion_main!(benches);
