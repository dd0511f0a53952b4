use std::hint::black_box;

use carnot_core::calculus::{homogeneous_norm, norm_horizontal_gradient};
use carnot_core::parabolic::{capped_potential, init_state, step_in_place, Workspace};
use carnot_core::quadrature::{build_annular_mesh, integrate_with};
use carnot_core::{CarnotGroup, EvolutionConfig, GridSpec};
use criterion::{criterion_group, criterion_main, Criterion};

fn norms(c: &mut Criterion) {
    let h1 = CarnotGroup::heisenberg(1).unwrap();
    let q = CarnotGroup::quaternionic();
    let x3 = [0.3, -0.2, 0.7];
    let x7 = [0.3, -0.2, 0.1, 0.5, 0.7, -0.4, 0.2];
    c.bench_function("norm/heisenberg", |b| {
        b.iter(|| homogeneous_norm(&h1, black_box(&x3)))
    });
    c.bench_function("norm/quaternionic", |b| {
        b.iter(|| homogeneous_norm(&q, black_box(&x7)))
    });
    c.bench_function("norm_gradient/heisenberg", |b| {
        b.iter(|| norm_horizontal_gradient(&h1, black_box(&x3)).unwrap())
    });
}

fn mesh(c: &mut Criterion) {
    let g = CarnotGroup::heisenberg(1).unwrap();
    let mesh = build_annular_mesh(&g, 1e-2, 1.0, 6, 16).unwrap();
    c.bench_function("mesh/integrate_h1", |b| {
        b.iter(|| integrate_with(&mesh, |_, x: &[f64]| homogeneous_norm(&g, x).powi(-2)).unwrap())
    });
}

fn parabolic(c: &mut Criterion) {
    let grid = GridSpec::cube(0.5, 0.5, 32).unwrap();
    let cfg = EvolutionConfig::new(1.7, None, 1e-3).unwrap();
    let v = capped_potential(&grid, &cfg);
    let dt = cfg.dt(&grid);
    let mut state = init_state(&grid, &cfg).unwrap();
    let mut ws = Workspace::default();
    c.bench_function("parabolic/step_32", |b| {
        b.iter(|| step_in_place(&mut state, &grid, &cfg, &v, dt, &mut ws).unwrap())
    });
}

criterion_group!(benches, norms, mesh, parabolic);
criterion_main!(benches);
