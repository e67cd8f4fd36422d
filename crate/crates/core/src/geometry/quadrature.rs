//! Positive-weight quadrature on the unit tetrahedron and unit triangle.
//!
//! Rules are conical (collapsed) products of Gauss-Jacobi rules, which are exact
//! to any requested degree with strictly positive weights and interior points.

use nalgebra::{DMatrix, SymmetricEigen, Vector2, Vector3};

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 14;

#[derive(Clone, Debug)]
pub struct QuadratureRule<P> {
    pub points: Vec<P>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

pub type TetRule = QuadratureRule<Vector3<f64>>;
pub type TriRule = QuadratureRule<Vector2<f64>>;

impl<P> QuadratureRule<P> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&P, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// Gauss-Jacobi rule on `[0, 1]` for the weight `(1 - t)^alpha`, via Golub-Welsch.
fn gauss_jacobi_unit(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let beta = 0.0;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let k = i as f64;
        let s = 2.0 * k + alpha + beta;
        jac[(i, i)] = if i == 0 {
            (beta - alpha) / (alpha + beta + 2.0)
        } else {
            (beta * beta - alpha * alpha) / (s * (s + 2.0))
        };
        if i + 1 < n {
            let k1 = k + 1.0;
            let s1 = 2.0 * k1 + alpha + beta;
            let num = 4.0 * k1 * (k1 + alpha) * (k1 + beta) * (k1 + alpha + beta);
            let den = s1 * s1 * (s1 + 1.0) * (s1 - 1.0);
            let off = (num / den).sqrt();
            jac[(i, i + 1)] = off;
            jac[(i + 1, i)] = off;
        }
    }
    let mu0 = 2f64.powf(alpha + beta + 1.0) / (alpha + beta + 1.0);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            (x, mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // x in [-1,1] -> t = (1+x)/2; (1-t)^alpha dt = 2^{-alpha-1} (1-x)^alpha dx
    let scale = 2f64.powf(-alpha - 1.0);
    let pts = pairs.iter().map(|p| 0.5 * (1.0 + p.0)).collect();
    let wts = pairs.iter().map(|p| p.1 * scale).collect();
    (pts, wts)
}

fn check_degree(degree: usize) -> Result<()> {
    if degree == 0 || degree > MAX_DEGREE {
        return Err(Error::UnsupportedQuadrature(degree));
    }
    Ok(())
}

/// Rule on the unit tetrahedron exact for polynomials of total degree `degree`.
pub fn tet_quadrature(degree: usize) -> Result<TetRule> {
    check_degree(degree)?;
    let n = (degree + 2) / 2;
    let (a, wa) = gauss_jacobi_unit(n, 0.0);
    let (b, wb) = gauss_jacobi_unit(n, 1.0);
    let (c, wc) = gauss_jacobi_unit(n, 2.0);
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let z = c[k];
                let y = b[j] * (1.0 - z);
                let x = a[i] * (1.0 - b[j]) * (1.0 - z);
                points.push(Vector3::new(x, y, z));
                weights.push(wa[i] * wb[j] * wc[k]);
            }
        }
    }
    Ok(TetRule {
        points,
        weights,
        exactness_degree: degree,
    })
}

/// Rule on the unit triangle `{s, t >= 0, s + t <= 1}` exact to `degree`.
pub fn tri_quadrature(degree: usize) -> Result<TriRule> {
    check_degree(degree)?;
    let n = (degree + 2) / 2;
    let (a, wa) = gauss_jacobi_unit(n, 0.0);
    let (b, wb) = gauss_jacobi_unit(n, 1.0);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            points.push(Vector2::new(a[i] * (1.0 - b[j]), b[j]));
            weights.push(wa[i] * wb[j]);
        }
    }
    Ok(TriRule {
        points,
        weights,
        exactness_degree: degree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{tet_monomial_integral, tri_monomial_integral};

    #[test]
    fn degree_one_tet_rule_is_barycenter() {
        let r = tet_quadrature(1).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.weights[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((r.points[0] - Vector3::repeat(0.25)).norm() < 1e-15);
    }

    #[test]
    fn tet_rules_exact_for_all_monomials() {
        for d in 1..=MAX_DEGREE {
            let r = tet_quadrature(d).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 1.0 / 6.0).abs() < 1e-14);
            assert!(r.weights.iter().all(|w| *w > 0.0));
            for a in 0..=d {
                for b in 0..=d - a {
                    for c in 0..=d - a - b {
                        let q: f64 = r
                            .iter()
                            .map(|(p, w)| w * p.x.powi(a as i32) * p.y.powi(b as i32) * p.z.powi(c as i32))
                            .sum();
                        let exact = tet_monomial_integral([a, b, c]);
                        assert!((q - exact).abs() <= 1e-13 * exact.max(1e-3), "d={d} {a}{b}{c}");
                    }
                }
            }
        }
    }

    #[test]
    fn tri_rules_exact_for_all_monomials() {
        for d in 1..=MAX_DEGREE {
            let r = tri_quadrature(d).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-14);
            for a in 0..=d {
                for b in 0..=d - a {
                    let q: f64 = r
                        .iter()
                        .map(|(p, w)| w * p.x.powi(a as i32) * p.y.powi(b as i32))
                        .sum();
                    let exact = tri_monomial_integral(a, b);
                    assert!((q - exact).abs() <= 1e-13 * exact.max(1e-3));
                }
            }
        }
    }

    #[test]
    fn factorial_moment_example() {
        // x^2 y z over the tetrahedron: 2! 1! 1! / (2 + 1 + 1 + 3)!
        let exact = 2.0 / 5040.0;
        assert!((tet_monomial_integral([2, 1, 1]) - exact).abs() < 1e-18);
        let r = tet_quadrature(4).unwrap();
        let q: f64 = r.iter().map(|(p, w)| w * p.x * p.x * p.y * p.z).sum();
        assert!((q - exact).abs() < 1e-16);
    }

    #[test]
    fn unsupported_degree_rejected() {
        assert!(tet_quadrature(0).is_err());
        assert!(tri_quadrature(15).is_err());
    }
}
