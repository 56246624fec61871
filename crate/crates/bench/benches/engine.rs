use criterion::{criterion_group, criterion_main, Criterion};
use magnomech_bench::shipped;
use magnomech_core::integrator::{integrate, IntegratorOptions};
use magnomech_core::magnetic::magnetic_vector_field;
use magnomech_core::nonholonomic::distributional_field_multiplier;
use magnomech_core::suite::{run_check, CheckKind, CheckOptions};
use magnomech_core::{FieldKind, PhasePoint};
use std::hint::black_box;

fn vector_fields(c: &mut Criterion) {
    let s = shipped("magnetic-3d");
    let z = PhasePoint::from_slices(&[0.1, -0.2, 0.3], &[0.5, 1.0, -0.4]).unwrap();
    c.bench_function("magnetic field, n = 3", |b| {
        b.iter(|| magnetic_vector_field(&s.hamiltonian, &s.magnetic, black_box(&z)).unwrap())
    });

    let s = shipped("nh-magnetic-particle");
    let z = PhasePoint::from_stacked(&s.phase_samples(1, 3).unwrap()[0]);
    c.bench_function("constrained field, n = 3, k = 1", |b| {
        b.iter(|| {
            distributional_field_multiplier(
                &s.constraints,
                &s.hamiltonian,
                &s.magnetic,
                black_box(&z),
            )
            .unwrap()
        })
    });
}

fn checks(c: &mut Criterion) {
    let mut g = c.benchmark_group("checks");
    g.sample_size(10);
    let opts = CheckOptions {
        seed: 0,
        samples: Some(16),
    };
    for name in ["charged-particle", "nh-magnetic-particle"] {
        let s = shipped(name);
        for kind in [CheckKind::Hj1, CheckKind::Hj2] {
            g.bench_function(format!("{name} {}", kind.name()), |b| {
                b.iter(|| run_check(&s, kind, false, &opts).unwrap())
            });
        }
    }
    g.finish();
}

fn trajectories(c: &mut Criterion) {
    let mut g = c.benchmark_group("integrate");
    g.sample_size(10);
    let s = shipped("nh-magnetic-particle");
    let z0 = s.initial_state().unwrap().unwrap();
    for project in [false, true] {
        let opts = IntegratorOptions {
            dt: 0.01,
            t_end: 1.0,
            project,
        };
        g.bench_function(format!("100 steps, project = {project}"), |b| {
            b.iter(|| {
                integrate(
                    FieldKind::Distributional,
                    &s.constraints,
                    &s.hamiltonian,
                    &s.magnetic,
                    &z0,
                    opts,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, vector_fields, checks, trajectories);
criterion_main!(benches);
