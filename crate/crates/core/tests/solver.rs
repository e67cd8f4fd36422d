use nalgebra::Vector3;
use pmfem::assembly::*;
use pmfem::geometry::{build_curved_maps, CurvedElementMap};
use pmfem::mesh::{generate_ball_mesh, generate_cavity_mesh, StraightMesh};
use pmfem::solver::*;
use pmfem::spaces::{FeSpace, PressureMass, VectorField};

struct Problem {
    mesh: StraightMesh,
    maps: Vec<CurvedElementMap>,
    space: FeSpace,
}

fn ball(level: usize) -> Problem {
    let mesh = generate_ball_mesh(1.0, level).unwrap();
    let maps = build_curved_maps(&mesh, 2).unwrap();
    let space = FeSpace::new(&mesh, 2).unwrap();
    Problem { mesh, maps, space }
}

impl Problem {
    fn disc(&self) -> Discretization<'_> {
        Discretization::new(&self.mesh, &self.maps, &self.space, QuadratureConfig::for_degree(2)).unwrap()
    }

    fn mass(&self) -> PressureMass {
        PressureMass::new(&self.space, &self.maps).unwrap()
    }

    fn system(&self, alpha: f64, with_data: bool) -> BlockSystem {
        let f = |x: &Vector3<f64>| Vector3::new(x.y.sin() + 2.0 * x.x, x.z.cos() + 2.0 * x.y, 2.0 * x.z);
        let g = |x: &Vector3<f64>| Vector3::new(x.y.sin(), x.z.cos(), -x.x);
        let data = ProblemData {
            source: with_data.then_some(&f as VectorField),
            rhs_mode: RhsMode::Direct,
            dirichlet: with_data.then_some(&g as VectorField),
            alpha,
            nu: 1.0,
        };
        assemble_system(&self.disc(), &data).unwrap().0
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn minres_agrees_with_direct_solve() {
    let p = ball(0);
    let sys = p.system(20.0, true);
    let mass = p.mass();
    let (it, rep) = solve_minres(&sys, &p.space, &mass, &SolverConfig::default()).unwrap();
    let (direct, drep) = solve_direct(&sys, &p.space, &mass).unwrap();
    assert!(rep.converged);
    assert!(drep.true_relative_residual < 1e-12);
    assert!(max_diff(&it.velocity, &direct.velocity) < 1e-8);
    assert!(max_diff(&it.pressure, &direct.pressure) < 1e-8);
    assert!(mass.mean(&p.space, &it.pressure).abs() < 1e-12);
}

#[test]
fn every_velocity_block_converges_to_the_same_solution() {
    let p = ball(0);
    let sys = p.system(20.0, true);
    let mass = p.mass();
    let reference = solve_minres(&sys, &p.space, &mass, &SolverConfig::default()).unwrap().0;
    for block in [VelocityBlock::Jacobi, VelocityBlock::SymmetricGaussSeidel, VelocityBlock::InnerCg] {
        let cfg = SolverConfig {
            velocity_block: block,
            max_iter: 20_000,
            ..Default::default()
        };
        let (sol, rep) = solve_minres(&sys, &p.space, &mass, &cfg).unwrap();
        assert!(rep.converged, "{}", block.name());
        assert!(max_diff(&sol.velocity, &reference.velocity) < 1e-7, "{}", block.name());
    }
}

#[test]
fn preconditioners_are_symmetric_positive_definite() {
    let p = ball(0);
    let sys = p.system(20.0, false);
    let mass = p.mass();
    for block in [VelocityBlock::Cholesky, VelocityBlock::Jacobi, VelocityBlock::SymmetricGaussSeidel] {
        let cfg = SolverConfig {
            velocity_block: block,
            ..Default::default()
        };
        let prec = BlockPreconditioner::new(&sys, &mass, &cfg).unwrap();
        let probe = probe_preconditioner(&prec, sys.dimension(), 8, 3);
        assert!(probe.is_spd(), "{}: {probe:?}", block.name());
    }
}

#[test]
fn residual_history_is_monotone() {
    let p = ball(0);
    let sys = p.system(20.0, true);
    let cfg = SolverConfig {
        velocity_block: VelocityBlock::Jacobi,
        ..Default::default()
    };
    let (_, rep) = solve_minres(&sys, &p.space, &p.mass(), &cfg).unwrap();
    assert_eq!(rep.residual_history[0], 1.0);
    assert!(rep.residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    assert!(rep.true_relative_residual < 1e-9);
}

#[test]
fn zero_data_gives_zero_solution() {
    let p = ball(0);
    let sys = p.system(20.0, false);
    let (sol, rep) = solve_minres(&sys, &p.space, &p.mass(), &SolverConfig::default()).unwrap();
    assert!(rep.converged);
    assert_eq!(rep.iterations, 0);
    assert!(sol.velocity.iter().chain(&sol.pressure).all(|v| *v == 0.0));
}

#[test]
fn iteration_cap_is_reported_not_raised() {
    let p = ball(0);
    let sys = p.system(20.0, true);
    let cfg = SolverConfig {
        velocity_block: VelocityBlock::Jacobi,
        max_iter: 3,
        ..Default::default()
    };
    let (_, rep) = solve_minres(&sys, &p.space, &p.mass(), &cfg).unwrap();
    assert!(!rep.converged);
    assert_eq!(rep.iterations, 3);
}

#[test]
fn saddle_operator_is_symmetric() {
    let p = ball(0);
    let sys = p.system(20.0, false);
    assert!(sys.a.asymmetry() <= 1e-12 * sys.a.max_abs());
    let op = SaddleOperator::new(&sys);
    let n = op.dim();
    let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5).collect();
    let y: Vec<f64> = (0..n).map(|i| ((i * 104_729) % 97) as f64 / 97.0 - 0.5).collect();
    let (mut kx, mut ky) = (vec![0.0; n], vec![0.0; n]);
    op.apply(&x, &mut kx);
    op.apply(&y, &mut ky);
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    assert!((d(&x, &ky) - d(&y, &kx)).abs() < 1e-10 * d(&kx, &kx).sqrt() * d(&y, &y).sqrt());
}

#[test]
fn coercivity_grows_with_penalty() {
    let p = ball(0);
    let d = p.disc();
    let sys = p.system(20.0, false);
    let energy = restrict_to_free(&assemble_energy_gram(&d).unwrap(), &sys.free);
    let values: Vec<f64> = [5.0, 20.0, 80.0]
        .iter()
        .map(|&alpha| {
            let a = restrict_to_free(&assemble_a_dg(&d, alpha).unwrap(), &sys.free);
            estimate_coercivity(&a, &energy, 300).unwrap().value
        })
        .collect();
    assert!(values[1] > 0.0, "{values:?}");
    assert!(values.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-6)), "{values:?}");
}

#[test]
fn default_penalty_is_coercive_on_the_coarse_cavity() {
    let mesh = generate_cavity_mesh(Vector3::repeat(0.5), 0.25, 1248).unwrap();
    let maps = build_curved_maps(&mesh, 2).unwrap();
    let space = FeSpace::new(&mesh, 2).unwrap();
    let d = Discretization::new(&mesh, &maps, &space, QuadratureConfig::for_degree(2)).unwrap();
    let mut fixed = vec![false; space.dofs.n_velocity];
    for &i in &space.dofs.boundary_normal_dofs {
        fixed[i] = true;
    }
    let free: Vec<usize> = (0..fixed.len()).filter(|&i| !fixed[i]).collect();
    let energy = restrict_to_free(&assemble_energy_gram(&d).unwrap(), &free);
    let a = restrict_to_free(&assemble_a_dg(&d, 20.0).unwrap(), &free);
    let est = estimate_coercivity(&a, &energy, 300).unwrap();
    assert!(est.value > 0.0, "{est:?}");
}

#[test]
fn tiny_penalty_loses_coercivity() {
    let p = ball(0);
    let d = p.disc();
    let sys = p.system(20.0, false);
    let energy = restrict_to_free(&assemble_energy_gram(&d).unwrap(), &sys.free);
    let a = restrict_to_free(&assemble_a_dg(&d, 1e-3).unwrap(), &sys.free);
    let est = estimate_coercivity(&a, &energy, 300).unwrap();
    assert!(est.value < 0.0, "{est:?}");
}

#[test]
fn inf_sup_is_positive_and_stable_under_refinement() {
    let values: Vec<f64> = (0..2)
        .map(|level| {
            let p = ball(level);
            let d = p.disc();
            let sys = p.system(20.0, false);
            let energy = restrict_to_free(&assemble_energy_gram(&d).unwrap(), &sys.free);
            estimate_inf_sup(&sys.b, &energy, &p.space, &p.mass(), 200).unwrap().value
        })
        .collect();
    assert!(values.iter().all(|v| *v > 0.0), "{values:?}");
    assert!(values[1] >= 0.8 * values[0], "{values:?}");
}

#[test]
fn inf_sup_matches_dense_generalized_eigenproblem() {
    use nalgebra::{DMatrix, SymmetricEigen};
    let p = ball(0);
    let d = p.disc();
    let sys = p.system(20.0, false);
    let mass = p.mass();
    let energy = restrict_to_free(&assemble_energy_gram(&d).unwrap(), &sys.free);
    let est = estimate_inf_sup(&sys.b, &energy, &p.space, &mass, 300).unwrap();

    let b = sys.b.to_dense();
    let s = &b * energy.to_dense().cholesky().unwrap().solve(&b.transpose());
    let np = b.nrows();
    let mut m = DMatrix::zeros(np, np);
    for i in 0..np {
        let mut x = vec![0.0; np];
        x[i] = 1.0;
        m.set_column(i, &nalgebra::DVector::from_vec(mass.apply(&p.space, &x)));
    }
    let li = m.cholesky().unwrap().l().try_inverse().unwrap();
    let k = &li * s * li.transpose();
    let mut ev: Vec<f64> = SymmetricEigen::new((&k + k.transpose()) * 0.5).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    assert!(ev[0].abs() < 1e-10 && ev[1] > 1e-3, "{:?}", &ev[..3]);
    assert!((est.value - ev[1].sqrt()).abs() < 1e-6, "{} vs {}", est.value, ev[1].sqrt());
}
