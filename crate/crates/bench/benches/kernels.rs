use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::Vector3;
use pmfem::assembly::{assemble_a_dg, assemble_system, Discretization, ProblemData, QuadratureConfig, RhsMode};
use pmfem::geometry::{build_curved_maps, tet_quadrature, CurvedElementMap};
use pmfem::mesh::{generate_ball_mesh, StraightMesh};
use pmfem::solver::{solve_minres, SolverConfig};
use pmfem::spaces::{FeSpace, PressureMass, VectorField};

struct Setup {
    mesh: StraightMesh,
    maps: Vec<CurvedElementMap>,
    space: FeSpace,
}

fn setup(level: usize) -> Setup {
    let mesh = generate_ball_mesh(1.0, level).unwrap();
    let maps = build_curved_maps(&mesh, 2).unwrap();
    let space = FeSpace::new(&mesh, 2).unwrap();
    Setup { mesh, maps, space }
}

fn quadrature(c: &mut Criterion) {
    let rule = tet_quadrature(8).unwrap();
    let s = setup(1);
    let curved = s.maps.iter().find(|m| !m.is_affine).unwrap();
    c.bench_function("tet rule, degree 8, cubic monomial", |b| {
        b.iter(|| rule.iter().map(|(p, w)| w * p.x * p.y * p.z).sum::<f64>())
    });
    c.bench_function("curved jacobian over a degree-8 rule", |b| {
        b.iter(|| {
            rule.iter()
                .map(|(p, w)| w * curved.jacobian_at(black_box(p)).unwrap().det)
                .sum::<f64>()
        })
    });
}

fn assembly(c: &mut Criterion) {
    let s = setup(1);
    let mut group = c.benchmark_group("assembly, ball level 1");
    group.sample_size(10);
    group.bench_function("geometry cache", |b| {
        b.iter(|| Discretization::new(&s.mesh, &s.maps, &s.space, QuadratureConfig::for_degree(2)).unwrap())
    });
    let d = Discretization::new(&s.mesh, &s.maps, &s.space, QuadratureConfig::for_degree(2)).unwrap();
    group.bench_function("a_dg", |b| b.iter(|| assemble_a_dg(&d, 20.0).unwrap()));
    group.finish();
}

fn minres(c: &mut Criterion) {
    let s = setup(0);
    let d = Discretization::new(&s.mesh, &s.maps, &s.space, QuadratureConfig::for_degree(2)).unwrap();
    let f = |x: &Vector3<f64>| Vector3::new(x.y, -x.x, x.z.sin());
    let data = ProblemData {
        source: Some(&f as VectorField),
        rhs_mode: RhsMode::Direct,
        dirichlet: None,
        alpha: 20.0,
        nu: 1.0,
    };
    let sys = assemble_system(&d, &data).unwrap().0;
    let mass = PressureMass::new(&s.space, &s.maps).unwrap();
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("minres, ball level 0");
    group.sample_size(10);
    group.bench_function("cholesky block", |b| b.iter(|| solve_minres(&sys, &s.space, &mass, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, quadrature, assembly, minres);
criterion_main!(benches);
