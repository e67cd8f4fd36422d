use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::SparseCholesky;
use crate::error::Result;
use crate::spaces::{FeSpace, PressureMass};
use crate::sparse::CsrMatrix;

#[derive(Clone, Debug, Serialize)]
pub struct SpectralEstimate {
    pub value: f64,
    /// Lanczos residual bound on the underlying eigenvalue.
    pub residual_bound: f64,
    pub steps: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smallest eigenvalue of an operator `K` self-adjoint in the inner product of the
/// SPD matrix `M`, by Lanczos with full reorthogonalization. An optional vector is
/// deflated (kept `M`-orthogonal to the Krylov space).
#[allow(clippy::too_many_arguments)]
pub fn lanczos_smallest(
    n: usize,
    apply_k: &dyn Fn(&[f64]) -> Vec<f64>,
    apply_m: &dyn Fn(&[f64]) -> Vec<f64>,
    deflate: Option<&[f64]>,
    max_steps: usize,
    tol: f64,
    seed: u64,
) -> SpectralEstimate {
    let defl = deflate.map(|z| {
        let mz = apply_m(z);
        let nz = dot(z, &mz);
        (z.to_vec(), mz, nz)
    });
    let project = |x: &mut Vec<f64>| {
        if let Some((z, mz, nz)) = &defl {
            let c = dot(x, mz) / nz;
            for (xi, zi) in x.iter_mut().zip(z) {
                *xi -= c * zi;
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    project(&mut v);
    let mut mv = apply_m(&v);
    let s = dot(&v, &mv).sqrt();
    v.iter_mut().for_each(|x| *x /= s);
    mv.iter_mut().for_each(|x| *x /= s);
    let mut basis = vec![v];
    let mut mbasis = vec![mv];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let steps = max_steps.min(n.saturating_sub(usize::from(deflate.is_some()))).max(1);
    let mut best = SpectralEstimate {
        value: f64::NAN,
        residual_bound: f64::INFINITY,
        steps: 0,
        converged: false,
    };
    for j in 0..steps {
        let mut w = apply_k(&basis[j]);
        project(&mut w);
        let alpha = dot(&w, &mbasis[j]);
        alphas.push(alpha);
        for _ in 0..2 {
            for (b, mb) in basis.iter().zip(&mbasis) {
                let c = dot(&w, mb);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
            project(&mut w);
        }
        let mw = apply_m(&w);
        let beta = dot(&w, &mw).max(0.0).sqrt();
        let m = alphas.len();
        let t = DMatrix::from_fn(m, m, |r, c| {
            if r == c {
                alphas[r]
            } else if r + 1 == c {
                betas[r]
            } else if c + 1 == r {
                betas[c]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (imin, theta) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, x)| if x < acc.1 { (i, x) } else { acc });
        let bound = beta * eig.eigenvectors[(m - 1, imin)].abs();
        best = SpectralEstimate {
            value: theta,
            residual_bound: bound,
            steps: m,
            converged: bound <= tol * theta.abs().max(f64::MIN_POSITIVE) || beta <= 1e-14 * alpha.abs().max(1.0),
        };
        if best.converged && m >= 3 || beta <= 1e-14 * alpha.abs().max(1.0) {
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
        mbasis.push(mw.iter().map(|x| x / beta).collect());
    }
    best
}

/// Submatrix on the free velocity DOFs.
pub fn restrict_to_free(m: &CsrMatrix, free: &[usize]) -> CsrMatrix {
    let mut map = vec![None; m.nrows];
    for (k, &d) in free.iter().enumerate() {
        map[d] = Some(k);
    }
    m.restrict(&map, &map, free.len(), free.len())
}

/// Discrete inf-sup constant `inf_q sup_v (div v, q) / (|v|_E |q|)` over free
/// velocities and mean-free pressures, as the square root of the smallest nonzero
/// eigenvalue of `M_p^{-1} B E^{-1} B^T`.
pub fn estimate_inf_sup(
    b_free: &CsrMatrix,
    energy_free: &CsrMatrix,
    space: &FeSpace,
    mass: &PressureMass,
    max_steps: usize,
) -> Result<SpectralEstimate> {
    let chol = SparseCholesky::new(energy_free)?;
    let bt = b_free.transpose();
    let inv: Vec<DMatrix<f64>> = mass
        .blocks
        .iter()
        .map(|m| m.clone().try_inverse().expect("pressure mass block is SPD"))
        .collect();
    let np = space.dofs.local_pressure;
    let minv = |x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (e, m) in inv.iter().enumerate() {
            let r = e * np..(e + 1) * np;
            y[r.clone()].copy_from_slice((m * DVector::from_column_slice(&x[r])).as_slice());
        }
        y
    };
    let k = |x: &[f64]| minv(&b_free.matvec(&chol.solve(&bt.matvec(x))));
    let m = |x: &[f64]| mass.apply(space, x);
    let z = mass.constant_mode(space);
    let mut est = lanczos_smallest(b_free.nrows, &k, &m, Some(&z), max_steps, 1e-8, 7);
    est.residual_bound /= 2.0 * est.value.max(f64::MIN_POSITIVE).sqrt();
    est.value = est.value.max(0.0).sqrt();
    Ok(est)
}

/// Smallest generalized eigenvalue of `A v = lambda E v`.
pub fn estimate_coercivity(a_free: &CsrMatrix, energy_free: &CsrMatrix, max_steps: usize) -> Result<SpectralEstimate> {
    let chol = SparseCholesky::new(energy_free)?;
    let k = |x: &[f64]| chol.solve(&a_free.matvec(x));
    let m = |x: &[f64]| energy_free.matvec(x);
    Ok(lanczos_smallest(a_free.nrows, &k, &m, None, max_steps, 1e-8, 11))
}
