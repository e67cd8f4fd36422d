//! Iterative and direct solution of the constrained saddle-point system, plus
//! spectral estimates of the discrete inf-sup and coercivity constants.

mod minres;
mod spectral;

pub use minres::{minres, pcg_jacobi, IdentityPreconditioner, LinearOperator, MinresOutcome, Preconditioner};
pub use spectral::{estimate_coercivity, estimate_inf_sup, lanczos_smallest, restrict_to_free, SpectralEstimate};

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::BlockSystem;
use crate::error::{Error, Result};
use crate::spaces::{FeSpace, FieldCoefficients, PressureMass};
use crate::sparse::CsrMatrix;

/// Sparse Cholesky factorization of an SPD matrix.
pub struct SparseCholesky {
    llt: Llt<usize, f64>,
    n: usize,
}

impl SparseCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let lower = a.to_faer_lower()?;
        let llt = lower
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Solver(format!("sparse Cholesky failed: {e:?}")))?;
        Ok(Self { llt, n: a.nrows })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut m = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }
}

/// Velocity-block approximation inside the block-diagonal preconditioner.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityBlock {
    /// Exact sparse Cholesky solve with `A`.
    #[default]
    Cholesky,
    Jacobi,
    SymmetricGaussSeidel,
    /// Jacobi-preconditioned CG to a tight tolerance.
    InnerCg,
}

impl VelocityBlock {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cholesky => "cholesky",
            Self::Jacobi => "jacobi",
            Self::SymmetricGaussSeidel => "symmetric_gauss_seidel",
            Self::InnerCg => "inner_cg",
        }
    }
}

impl std::str::FromStr for VelocityBlock {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Self::Cholesky),
            "jacobi" => Ok(Self::Jacobi),
            "symmetric_gauss_seidel" | "sgs" => Ok(Self::SymmetricGaussSeidel),
            "inner_cg" => Ok(Self::InnerCg),
            _ => Err(Error::Config(format!("unknown velocity preconditioner '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative tolerance on the preconditioned residual norm.
    pub tol: f64,
    pub max_iter: usize,
    pub velocity_block: VelocityBlock,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 5000,
            velocity_block: VelocityBlock::Cholesky,
            inner_tol: 1e-12,
            inner_max_iter: 2000,
        }
    }
}

/// `[A B^T; B 0]` on the free velocity DOFs and all pressure DOFs.
pub struct SaddleOperator<'a> {
    pub system: &'a BlockSystem,
    bt: CsrMatrix,
}

impl<'a> SaddleOperator<'a> {
    pub fn new(system: &'a BlockSystem) -> Self {
        Self {
            system,
            bt: system.b.transpose(),
        }
    }
}

impl LinearOperator for SaddleOperator<'_> {
    fn dim(&self) -> usize {
        self.system.dimension()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nf = self.system.n_free();
        let (xu, xp) = x.split_at(nf);
        let (yu, yp) = y.split_at_mut(nf);
        self.system.a.matvec_into(xu, yu);
        let btp = self.bt.matvec(xp);
        for (a, b) in yu.iter_mut().zip(btp) {
            *a += b;
        }
        self.system.b.matvec_into(xu, yp);
    }
}

struct CsrOperator<'a>(&'a CsrMatrix);

impl LinearOperator for CsrOperator<'_> {
    fn dim(&self) -> usize {
        self.0.nrows
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.matvec_into(x, y);
    }
}

enum VelocitySolver {
    Cholesky(SparseCholesky),
    Jacobi(Vec<f64>),
    Sgs { a: CsrMatrix, diag: Vec<f64> },
    InnerCg { a: CsrMatrix, diag_inv: Vec<f64>, tol: f64, max_iter: usize },
}

impl VelocitySolver {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Self::Cholesky(c) => z.copy_from_slice(&c.solve(r)),
            Self::Jacobi(d) => {
                for i in 0..r.len() {
                    z[i] = r[i] * d[i];
                }
            }
            Self::Sgs { a, diag } => {
                let n = r.len();
                for i in 0..n {
                    let s: f64 = a.row(i).filter(|(j, _)| *j < i).map(|(j, v)| v * z[j]).sum();
                    z[i] = (r[i] - s) / diag[i];
                }
                let t: Vec<f64> = z.iter().zip(diag).map(|(a, b)| a * b).collect();
                for i in (0..n).rev() {
                    let s: f64 = a.row(i).filter(|(j, _)| *j > i).map(|(j, v)| v * z[j]).sum();
                    z[i] = (t[i] - s) / diag[i];
                }
            }
            Self::InnerCg { a, diag_inv, tol, max_iter } => {
                let (x, _) = pcg_jacobi(&CsrOperator(a), diag_inv, r, *tol, *max_iter);
                z.copy_from_slice(&x);
            }
        }
    }
}

/// `diag(A^{-1}-approximation, nu M_p^{-1})`.
pub struct BlockPreconditioner {
    velocity: VelocitySolver,
    pressure_inv: Vec<DMatrix<f64>>,
    n_free: usize,
    local_pressure: usize,
    viscosity: f64,
    pub name: String,
}

impl BlockPreconditioner {
    pub fn new(system: &BlockSystem, mass: &PressureMass, config: &SolverConfig) -> Result<Self> {
        let diag = system.a.diagonal();
        if diag.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Solver("velocity block has a nonpositive diagonal".into()));
        }
        let velocity = match config.velocity_block {
            VelocityBlock::Cholesky => VelocitySolver::Cholesky(SparseCholesky::new(&system.a)?),
            VelocityBlock::Jacobi => VelocitySolver::Jacobi(diag.iter().map(|d| 1.0 / d).collect()),
            VelocityBlock::SymmetricGaussSeidel => VelocitySolver::Sgs {
                a: system.a.clone(),
                diag,
            },
            VelocityBlock::InnerCg => VelocitySolver::InnerCg {
                a: system.a.clone(),
                diag_inv: diag.iter().map(|d| 1.0 / d).collect(),
                tol: config.inner_tol,
                max_iter: config.inner_max_iter,
            },
        };
        let pressure_inv = mass
            .blocks
            .iter()
            .map(|b| {
                b.clone()
                    .cholesky()
                    .map(|c| c.inverse())
                    .ok_or_else(|| Error::Singular("pressure mass block".into()))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            velocity,
            pressure_inv,
            n_free: system.n_free(),
            local_pressure: mass.blocks.first().map_or(0, |b| b.nrows()),
            viscosity: system.viscosity,
            name: config.velocity_block.name().to_string(),
        })
    }
}

impl Preconditioner for BlockPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let nf = self.n_free;
        let (ru, rp) = r.split_at(nf);
        let (zu, zp) = z.split_at_mut(nf);
        self.velocity.apply(ru, zu);
        let np = self.local_pressure;
        zp.par_chunks_mut(np)
            .zip(rp.par_chunks(np))
            .zip(self.pressure_inv.par_iter())
            .for_each(|((ze, re), minv)| {
                let v = minv * DVector::from_column_slice(re) * self.viscosity;
                ze.copy_from_slice(v.as_slice());
            });
    }
}

/// Result of probing a preconditioner with random vectors.
#[derive(Clone, Debug, Serialize)]
pub struct PreconditionerProbe {
    /// Smallest `x^T P x / x^T x` seen.
    pub min_rayleigh: f64,
    /// Largest `|x^T P y - y^T P x| / (|x| |P y|)`.
    pub max_asymmetry: f64,
}

impl PreconditionerProbe {
    pub fn is_spd(&self) -> bool {
        self.min_rayleigh > 0.0 && self.max_asymmetry < 1e-8
    }
}

pub fn probe_preconditioner(prec: &dyn Preconditioner, n: usize, samples: usize, seed: u64) -> PreconditionerProbe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut min_rayleigh = f64::INFINITY;
    let mut max_asymmetry: f64 = 0.0;
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        prec.apply(&x, &mut px);
        prec.apply(&y, &mut py);
        min_rayleigh = min_rayleigh.min(dot(&x, &px) / dot(&x, &x));
        let scale = dot(&x, &x).sqrt() * dot(&py, &py).sqrt();
        max_asymmetry = max_asymmetry.max((dot(&x, &py) - dot(&y, &px)).abs() / scale);
    }
    PreconditionerProbe {
        min_rayleigh,
        max_asymmetry,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub preconditioner: String,
    pub iterations: usize,
    pub converged: bool,
    /// Final preconditioned residual relative to the initial one.
    pub relative_residual: f64,
    /// `|b - K x| / |b|` recomputed after the solve.
    pub true_relative_residual: f64,
    pub residual_history: Vec<f64>,
    /// Component of the pressure right-hand side along the constant mode that was
    /// removed before solving, relative to the right-hand side norm.
    pub removed_inconsistency: f64,
    pub n_velocity_free: usize,
    pub n_pressure: usize,
    pub seconds: f64,
    /// `|div u_h|_{L2}`, filled in by callers that have the geometry at hand.
    pub divergence_l2: Option<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Right-hand side of the saddle system with the pressure part projected
/// orthogonally to the constant mode (the kernel of `B^T`).
fn consistent_rhs(system: &BlockSystem, constant: &[f64]) -> (Vec<f64>, f64) {
    let mut rhs = system.rhs_velocity.clone();
    let mut rp = system.rhs_pressure.clone();
    let zz: f64 = constant.iter().map(|z| z * z).sum();
    let proj: f64 = rp.iter().zip(constant).map(|(a, b)| a * b).sum::<f64>() / zz;
    for (r, z) in rp.iter_mut().zip(constant) {
        *r -= proj * z;
    }
    rhs.extend(rp);
    let bn = norm(&rhs).max(f64::MIN_POSITIVE);
    (rhs, proj.abs() * zz.sqrt() / bn)
}

fn finish(system: &BlockSystem, space: &FeSpace, mass: &PressureMass, x: &[f64]) -> FieldCoefficients {
    let nf = system.n_free();
    let velocity = system.expand_velocity(&x[..nf]);
    let mut pressure: Vec<f64> = x[nf..nf + system.b.nrows].iter().map(|v| -v).collect();
    mass.remove_mean(space, &mut pressure);
    FieldCoefficients { velocity, pressure }
}

fn true_residual(op: &SaddleOperator, rhs: &[f64], x: &[f64]) -> f64 {
    let mut kx = vec![0.0; rhs.len()];
    op.apply(x, &mut kx);
    let r: Vec<f64> = rhs.iter().zip(&kx).map(|(a, b)| a - b).collect();
    norm(&r) / norm(rhs).max(f64::MIN_POSITIVE)
}

/// Preconditioned MINRES on the (singular, consistent) saddle system, followed by
/// removal of the pressure mean. Hitting `max_iter` is not an error: the last
/// iterate is returned with `converged == false`.
pub fn solve_minres(
    system: &BlockSystem,
    space: &FeSpace,
    mass: &PressureMass,
    config: &SolverConfig,
) -> Result<(FieldCoefficients, SolveReport)> {
    let start = Instant::now();
    let prec = BlockPreconditioner::new(system, mass, config)?;
    let op = SaddleOperator::new(system);
    let (rhs, inconsistency) = consistent_rhs(system, &mass.constant_mode(space));
    let out = minres(&op, &prec, &rhs, config.tol, config.max_iter);
    let true_rel = true_residual(&op, &rhs, &out.x);
    let solution = finish(system, space, mass, &out.x);
    let report = SolveReport {
        method: "minres".into(),
        preconditioner: prec.name.clone(),
        iterations: out.iterations,
        converged: out.converged,
        relative_residual: *out.history.last().unwrap_or(&1.0),
        true_relative_residual: true_rel,
        residual_history: out.history,
        removed_inconsistency: inconsistency,
        n_velocity_free: system.n_free(),
        n_pressure: system.b.nrows,
        seconds: start.elapsed().as_secs_f64(),
        divergence_l2: None,
    };
    Ok((solution, report))
}

/// Sparse LU solve of the saddle system bordered by the pressure-mean constraint.
pub fn solve_direct(system: &BlockSystem, space: &FeSpace, mass: &PressureMass) -> Result<(FieldCoefficients, SolveReport)> {
    let start = Instant::now();
    let nf = system.n_free();
    let np = system.b.nrows;
    let n = nf + np + 1;
    let mut trip = Vec::with_capacity(system.a.nnz() + 2 * system.b.nnz() + 2 * np);
    for i in 0..nf {
        for (j, v) in system.a.row(i) {
            trip.push(Triplet::new(i, j, v));
        }
    }
    for i in 0..np {
        for (j, v) in system.b.row(i) {
            trip.push(Triplet::new(nf + i, j, v));
            trip.push(Triplet::new(j, nf + i, v));
        }
    }
    for (e, m) in mass.moments.iter().enumerate() {
        for (g, w) in space.dofs.pressure_dofs(e).zip(m) {
            trip.push(Triplet::new(nf + g, nf + np, *w));
            trip.push(Triplet::new(nf + np, nf + g, *w));
        }
    }
    let k = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::Solver(format!("bordered matrix: {e:?}")))?;
    let lu: Lu<usize, f64> = k.sp_lu().map_err(|e| Error::Solver(format!("sparse LU failed: {e:?}")))?;
    let (rhs, inconsistency) = consistent_rhs(system, &mass.constant_mode(space));
    let mut b = Mat::from_fn(n, 1, |i, _| if i < rhs.len() { rhs[i] } else { 0.0 });
    lu.solve_in_place(b.as_mut());
    let x: Vec<f64> = (0..n).map(|i| b[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("bordered saddle system".into()));
    }
    let op = SaddleOperator::new(system);
    let true_rel = true_residual(&op, &rhs, &x[..nf + np]);
    let solution = finish(system, space, mass, &x);
    Ok((
        solution,
        SolveReport {
            method: "direct".into(),
            preconditioner: "none".into(),
            iterations: 1,
            converged: true,
            relative_residual: true_rel,
            true_relative_residual: true_rel,
            residual_history: vec![1.0, true_rel],
            removed_inconsistency: inconsistency,
            n_velocity_free: nf,
            n_pressure: np,
            seconds: start.elapsed().as_secs_f64(),
            divergence_l2: None,
        },
    ))
}
