//! Hot-path benchmarks: exact bracket algebra, generator rewriting, the
//! special-function ladder, and the two reconstruction routes.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use redrec_core::{
    express_in_generators, integrate_ode, moving_line_reconstruction, poisson_bracket,
    IntegratorConfig, SampleGrid, SystemSpec,
};

fn bench_bracket(c: &mut Criterion) {
    let spec = SystemSpec::elliptic(0.5).unwrap();
    let h = spec.hamiltonian().unwrap();
    let j3 = &spec.momentum()[2];
    c.bench_function("poisson_bracket_j3_h", |b| {
        b.iter(|| poisson_bracket(black_box(j3), black_box(h)).unwrap())
    });
}

fn bench_express(c: &mut Criterion) {
    let spec = SystemSpec::elliptic(0.5).unwrap();
    let h = spec.hamiltonian().unwrap();
    let gens = spec.momentum();
    c.bench_function("express_h_in_momentum", |b| {
        b.iter(|| express_in_generators(black_box(h), black_box(gens), 2).unwrap())
    });
}

fn bench_ellipj(c: &mut Criterion) {
    let k = redrec_core::elliptic::EllipticModulus::new(0.9).unwrap();
    c.bench_function("ellipj_sweep", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for i in 0..100 {
                let (s, _, _) = redrec_core::elliptic::ellipj(black_box(i as f64 * 0.1), k);
                acc += s;
            }
            acc
        })
    });
}

fn bench_integrate(c: &mut Criterion) {
    let spec = SystemSpec::elliptic(0.5).unwrap();
    let field = spec.hamiltonian_vector_field().unwrap();
    let cfg = IntegratorConfig::dp45(1e-10, 1e-10);
    c.bench_function("dp45_elliptic_t10", |b| {
        b.iter(|| {
            integrate_ode(
                field.as_ode_field(),
                black_box(&[-1.0, 0.0, 0.0, 1.0]),
                (0.0, 10.0),
                &cfg,
                &SampleGrid::Count(101),
            )
            .unwrap()
        })
    });
}

fn bench_moving_line(c: &mut Criterion) {
    let spec = SystemSpec::elliptic(0.5).unwrap();
    let cfg = IntegratorConfig::dp45(1e-10, 1e-10);
    c.bench_function("moving_line_t10", |b| {
        b.iter(|| {
            moving_line_reconstruction(
                &spec,
                black_box(&[-1.0, 0.0, 0.0, 1.0]),
                (0.0, 10.0),
                &cfg,
                &SampleGrid::Count(101),
                4,
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_bracket,
    bench_express,
    bench_ellipj,
    bench_integrate,
    bench_moving_line
);
criterion_main!(benches);
