//! Dense polynomials in three variables over a monomial basis.
//!
//! All reference-element bases (BDM, pressure, Lagrange geometry) are stored as
//! coefficient vectors against [`Monomials`]; evaluation returns values together
//! with first and second derivatives so Jacobian data never needs differencing.

use nalgebra::{DMatrix, Matrix3, Vector3};

/// Exponent triples `(a, b, c)` of `x^a y^b z^c` with `a + b + c <= degree`,
/// ordered by total degree.
#[derive(Clone, Debug)]
pub struct Monomials {
    degree: usize,
    exps: Vec<[usize; 3]>,
}

impl Monomials {
    pub fn new(degree: usize) -> Self {
        let mut exps = Vec::new();
        for total in 0..=degree {
            for a in (0..=total).rev() {
                for b in (0..=total - a).rev() {
                    exps.push([a, b, total - a - b]);
                }
            }
        }
        Self { degree, exps }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self) -> &[[usize; 3]] {
        &self.exps
    }

    pub fn index_of(&self, e: [usize; 3]) -> Option<usize> {
        self.exps.iter().position(|x| *x == e)
    }

    /// Values of every monomial at `p`.
    pub fn values(&self, p: &Vector3<f64>) -> Vec<f64> {
        let pw = powers(p, self.degree);
        self.exps
            .iter()
            .map(|e| pw[0][e[0]] * pw[1][e[1]] * pw[2][e[2]])
            .collect()
    }

    /// Values, gradients and Hessians of every monomial at `p`.
    pub fn tabulate(&self, p: &Vector3<f64>) -> MonomialTable {
        let d = self.degree;
        let pw = powers(p, d);
        let n = self.exps.len();
        let mut values = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n);
        let mut hess = Vec::with_capacity(n);
        // derivative of t^e of order r, evaluated at the stored powers
        let der = |axis: usize, e: usize, r: usize| -> f64 {
            if r > e {
                return 0.0;
            }
            let mut c = 1.0;
            for j in 0..r {
                c *= (e - j) as f64;
            }
            c * pw[axis][e - r]
        };
        for e in &self.exps {
            let f = |r: [usize; 3]| der(0, e[0], r[0]) * der(1, e[1], r[1]) * der(2, e[2], r[2]);
            values.push(f([0, 0, 0]));
            grads.push(Vector3::new(f([1, 0, 0]), f([0, 1, 0]), f([0, 0, 1])));
            let xy = f([1, 1, 0]);
            let xz = f([1, 0, 1]);
            let yz = f([0, 1, 1]);
            hess.push(Matrix3::new(
                f([2, 0, 0]),
                xy,
                xz,
                xy,
                f([0, 2, 0]),
                yz,
                xz,
                yz,
                f([0, 0, 2]),
            ));
        }
        MonomialTable { values, grads, hess }
    }
}

fn powers(p: &Vector3<f64>, degree: usize) -> [Vec<f64>; 3] {
    let mk = |t: f64| {
        let mut v = Vec::with_capacity(degree + 1);
        let mut acc = 1.0;
        for _ in 0..=degree {
            v.push(acc);
            acc *= t;
        }
        v
    };
    [mk(p.x), mk(p.y), mk(p.z)]
}

/// Monomial values and derivatives at a single point.
#[derive(Clone, Debug)]
pub struct MonomialTable {
    pub values: Vec<f64>,
    pub grads: Vec<Vector3<f64>>,
    pub hess: Vec<Matrix3<f64>>,
}

impl MonomialTable {
    pub fn value(&self, coeffs: &[f64]) -> f64 {
        coeffs.iter().zip(&self.values).map(|(c, v)| c * v).sum()
    }

    pub fn grad(&self, coeffs: &[f64]) -> Vector3<f64> {
        coeffs
            .iter()
            .zip(&self.grads)
            .fold(Vector3::zeros(), |acc, (c, g)| acc + g * *c)
    }

    pub fn hessian(&self, coeffs: &[f64]) -> Matrix3<f64> {
        coeffs
            .iter()
            .zip(&self.hess)
            .fold(Matrix3::zeros(), |acc, (c, h)| acc + h * *c)
    }
}

/// Exact integral of `x^a y^b z^c` over the unit reference tetrahedron.
pub fn tet_monomial_integral(e: [usize; 3]) -> f64 {
    let [a, b, c] = e;
    factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
}

/// Exact integral of `x^a y^b` over the unit reference triangle.
pub fn tri_monomial_integral(a: usize, b: usize) -> f64 {
    factorial(a) * factorial(b) / factorial(a + b + 2)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Barycentric lattice `alpha / degree` on a simplex with `n_vertices` vertices;
/// each entry lists the integer multi-index (one entry per vertex).
pub fn lattice(n_vertices: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in (0..=left).rev() {
            cur.push(v);
            rec(left - v, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(degree, n_vertices, &mut Vec::new(), &mut out);
    out
}

/// Lagrange basis of `P_degree` on the unit tetrahedron at the barycentric lattice,
/// returned as monomial coefficient vectors (one per lattice node, same order as
/// [`lattice(4, degree)`](lattice)).
pub fn tet_lagrange_basis(degree: usize) -> (Monomials, Vec<Vec<f64>>, Vec<Vector3<f64>>) {
    let mons = Monomials::new(degree);
    let nodes: Vec<Vector3<f64>> = lattice(4, degree)
        .into_iter()
        .map(|m| {
            let d = degree.max(1) as f64;
            Vector3::new(m[1] as f64 / d, m[2] as f64 / d, m[3] as f64 / d)
        })
        .collect();
    let n = mons.len();
    let mut vander = DMatrix::zeros(n, n);
    for (i, p) in nodes.iter().enumerate() {
        for (j, v) in mons.values(p).into_iter().enumerate() {
            vander[(i, j)] = v;
        }
    }
    let inv = vander
        .try_inverse()
        .expect("Lagrange lattice Vandermonde is nonsingular");
    let coeffs = (0..n)
        .map(|node| (0..n).map(|j| inv[(j, node)]).collect())
        .collect();
    (mons, coeffs, nodes)
}

/// Lagrange basis of `P_degree` in two variables `(s, t)` at the triangle lattice
/// `(alpha_1, alpha_2) / degree`, as coefficients over `s^a t^b` monomials listed in
/// the returned exponent vector.
pub fn tri_lagrange_basis(degree: usize) -> (Vec<[usize; 2]>, Vec<Vec<f64>>) {
    let mut exps = Vec::new();
    for total in 0..=degree {
        for a in (0..=total).rev() {
            exps.push([a, total - a]);
        }
    }
    let nodes = lattice(3, degree);
    let n = exps.len();
    let d = degree.max(1) as f64;
    let mut vander = DMatrix::zeros(n, n);
    for (i, m) in nodes.iter().enumerate() {
        let s = m[1] as f64 / d;
        let t = m[2] as f64 / d;
        for (j, e) in exps.iter().enumerate() {
            vander[(i, j)] = s.powi(e[0] as i32) * t.powi(e[1] as i32);
        }
    }
    let inv = vander
        .try_inverse()
        .expect("triangle lattice Vandermonde is nonsingular");
    let coeffs = (0..n)
        .map(|node| (0..n).map(|j| inv[(j, node)]).collect())
        .collect();
    (exps, coeffs)
}

pub fn eval_tri_poly(exps: &[[usize; 2]], coeffs: &[f64], s: f64, t: f64) -> f64 {
    exps.iter()
        .zip(coeffs)
        .map(|(e, c)| c * s.powi(e[0] as i32) * t.powi(e[1] as i32))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        for d in 0..5 {
            assert_eq!(Monomials::new(d).len(), (d + 1) * (d + 2) * (d + 3) / 6);
        }
    }

    #[test]
    fn lagrange_is_nodal_and_partition_of_unity() {
        for k in 1..=3 {
            let (mons, coeffs, nodes) = tet_lagrange_basis(k);
            for (i, p) in nodes.iter().enumerate() {
                let t = mons.tabulate(p);
                for (j, c) in coeffs.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((t.value(c) - expect).abs() < 1e-12);
                }
            }
            let p = Vector3::new(0.13, 0.27, 0.31);
            let t = mons.tabulate(&p);
            let s: f64 = coeffs.iter().map(|c| t.value(c)).sum();
            let g: Vector3<f64> = coeffs.iter().map(|c| t.grad(c)).sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(g.norm() < 1e-11);
        }
    }

    #[test]
    fn monomial_derivatives_match_differences() {
        let mons = Monomials::new(3);
        let p = Vector3::new(0.2, 0.3, 0.1);
        let t = mons.tabulate(&p);
        let h = 1e-6;
        for axis in 0..3 {
            let mut dp = Vector3::zeros();
            dp[axis] = h;
            let vp = mons.values(&(p + dp));
            let vm = mons.values(&(p - dp));
            for i in 0..mons.len() {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                assert!((fd - t.grads[i][axis]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn tet_moment_formula() {
        assert!((tet_monomial_integral([0, 0, 0]) - 1.0 / 6.0).abs() < 1e-15);
        assert!((tet_monomial_integral([1, 0, 0]) - 1.0 / 24.0).abs() < 1e-15);
    }
}
