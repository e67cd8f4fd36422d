/// Symmetric operator `y = K x`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Symmetric positive definite preconditioner `z = P^{-1} r`.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

#[derive(Clone, Debug)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Preconditioned residual norms relative to the initial one, starting at 1.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned MINRES (Paige-Saunders) from a zero initial guess. Stops once
/// the preconditioned residual norm drops below `tol` times its initial value.
pub fn minres(op: &dyn LinearOperator, prec: &dyn Preconditioner, b: &[f64], tol: f64, max_iter: usize) -> MinresOutcome {
    let n = op.dim();
    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y = vec![0.0; n];
    prec.apply(&r1, &mut y);
    let beta1 = dot(&r1, &y).max(0.0).sqrt();
    let mut history = vec![1.0];
    if beta1 == 0.0 {
        return MinresOutcome {
            x,
            iterations: 0,
            converged: true,
            history,
        };
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0, 0.0);
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        op.apply(&v, &mut y);
        if iterations >= 2 {
            let c = beta / oldb;
            for (yi, ri) in y.iter_mut().zip(&r1) {
                *yi -= c * ri;
            }
        }
        let alfa = dot(&v, &y);
        let c = alfa / beta;
        for (yi, ri) in y.iter_mut().zip(&r2) {
            *yi -= c * ri;
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        prec.apply(&r2, &mut y);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
            x[i] += phi * w[i];
        }
        let rel = phibar.abs() / beta1;
        history.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
        if beta == 0.0 {
            // invariant subspace: the current iterate is exact in it
            converged = true;
            break;
        }
    }
    MinresOutcome {
        x,
        iterations,
        converged,
        history,
    }
}

/// Conjugate gradients with Jacobi preconditioning, zero initial guess.
pub fn pcg_jacobi(op: &dyn LinearOperator, diag_inv: &[f64], b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, usize) {
    let n = op.dim();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return (x, 0);
    }
    let mut z: Vec<f64> = r.iter().zip(diag_inv).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 1..=max_iter {
        op.apply(&p, &mut q);
        let a = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * q[i];
        }
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return (x, it);
        }
        for i in 0..n {
            z[i] = r[i] * diag_inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Diag(Vec<f64>);

    impl LinearOperator for Diag {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..x.len() {
                y[i] = self.0[i] * x[i];
            }
        }
    }

    #[test]
    fn solves_indefinite_diagonal_system() {
        let op = Diag(vec![3.0, -2.0, 0.5, -7.0, 1.0]);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let out = minres(&op, &IdentityPreconditioner, &b, 1e-14, 50);
        assert!(out.converged);
        for i in 0..5 {
            assert!((out.x[i] - b[i] / op.0[i]).abs() < 1e-12);
        }
        assert!(out.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn cg_solves_spd_diagonal() {
        let op = Diag(vec![3.0, 2.0, 0.5]);
        let (x, _) = pcg_jacobi(&op, &[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0], 1e-14, 10);
        assert!((x[2] - 2.0).abs() < 1e-12);
    }
}
