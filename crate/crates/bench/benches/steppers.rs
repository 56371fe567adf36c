use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gwp_core::averages::{AverageEngine, AverageMode, GaussianDensity};
use gwp_core::integrators::{bootstrap, boris_full_step, mrk4_step, rk4_canonical_step};
use gwp_core::scenarios::{initial_canonical, ExperimentSpec};
use gwp_core::{Dynamics, FieldModel, TrigField2D};

fn sublinear() -> (Dynamics, gwp_core::CanonicalState) {
    let spec = ExperimentSpec::preset("sublinear-convergence").unwrap();
    let init = initial_canonical(spec.initial, &spec.field, spec.eps[0]).unwrap();
    (spec.dynamics(), init)
}

fn steppers(c: &mut Criterion) {
    let (dy, init) = sublinear();
    let m = dy.to_magnetic(&init).unwrap();
    let tau = 0.004;
    let st = bootstrap(&dy, &m, tau, 10).unwrap();
    let mut g = c.benchmark_group("step");
    g.bench_function("boris", |b| b.iter(|| boris_full_step(black_box(&dy), black_box(&st)).unwrap()));
    g.bench_function("mrk4", |b| b.iter(|| mrk4_step(black_box(&dy), black_box(&m), tau).unwrap()));
    g.bench_function("rk4-canonical", |b| {
        b.iter(|| rk4_canonical_step(black_box(&dy), black_box(&init), tau).unwrap())
    });
    g.finish();
}

fn means(c: &mut Criterion) {
    let (_, init) = sublinear();
    let model = TrigField2D::new(1.0);
    let dn = GaussianDensity::of_canonical(&init).unwrap();
    let mut g = c.benchmark_group("means");
    for order in [6, 10, 16, 24] {
        let eng = AverageEngine::new(AverageMode::Quadrature, order);
        g.bench_with_input(BenchmarkId::new("quadrature", order), &eng, |b, eng| {
            b.iter(|| eng.means(black_box(&model as &dyn FieldModel), 0.3, black_box(&dn)).unwrap())
        });
    }
    let eng = AverageEngine::new(AverageMode::Analytic, 10);
    g.bench_function("analytic", |b| {
        b.iter(|| eng.means(black_box(&model as &dyn FieldModel), 0.3, black_box(&dn)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, steppers, means);
criterion_main!(benches);
