use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{ref_face_jacobian, ref_face_normal, ref_face_point, tet_quadrature, tri_quadrature};
use crate::poly::{eval_tri_poly, lattice, tet_monomial_integral, tri_lagrange_basis, Monomials};

/// Vector polynomial as monomial coefficients per component.
pub type VectorPoly = [Vec<f64>; 3];

/// One degree of freedom of the reference BDM element.
#[derive(Clone, Debug, PartialEq)]
pub enum DofFunctional {
    /// `int_F v.n q_node ds` with `q_node` the Lagrange basis function of the face
    /// lattice node (barycentric multi-index over the face's local vertices).
    FaceMoment { face: usize, node: [usize; 3] },
    /// `int_K v.q_i dx` against the `index`-th interior test function.
    InteriorMoment { index: usize },
}

/// Shape function values and reference gradients at one point.
#[derive(Clone, Debug)]
pub struct ShapeValues {
    pub values: Vec<Vector3<f64>>,
    /// `grads[i][(a, j)] = d phi_i,a / d xhat_j`.
    pub grads: Vec<Matrix3<f64>>,
}

/// BDM(k) element on the unit reference tetrahedron.
#[derive(Clone, Debug)]
pub struct BdmReferenceBasis {
    degree: usize,
    mons: Monomials,
    shapes: Vec<VectorPoly>,
    functionals: Vec<DofFunctional>,
    face_lattice: Vec<Vec<usize>>,
    tri_exps: Vec<[usize; 2]>,
    tri_coeffs: Vec<Vec<f64>>,
    interior_tests: Vec<VectorPoly>,
    condition_number: f64,
}

impl BdmReferenceBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if !(1..=3).contains(&degree) {
            return Err(Error::UnsupportedDegree(degree));
        }
        let mons = Monomials::new(degree);
        let face_lattice = lattice(3, degree);
        let (tri_exps, tri_coeffs) = tri_lagrange_basis(degree);
        let interior_tests = if degree >= 2 {
            nedelec_tests(&mons, degree - 1)
        } else {
            Vec::new()
        };
        let mut functionals = Vec::new();
        for face in 0..4 {
            for m in &face_lattice {
                functionals.push(DofFunctional::FaceMoment {
                    face,
                    node: [m[0], m[1], m[2]],
                });
            }
        }
        for index in 0..interior_tests.len() {
            functionals.push(DofFunctional::InteriorMoment { index });
        }
        let n = 3 * mons.len();
        if functionals.len() != n {
            return Err(Error::Config(format!(
                "BDM({degree}) functional count {} differs from dimension {n}",
                functionals.len()
            )));
        }
        let mut basis = Self {
            degree,
            mons,
            shapes: Vec::new(),
            functionals,
            face_lattice,
            tri_exps,
            tri_coeffs,
            interior_tests,
            condition_number: 0.0,
        };
        let quad = basis.functional_quadrature(2 * degree)?;
        let m = basis.mons.len();
        let mut dof = DMatrix::zeros(n, n);
        for j in 0..n {
            let (c, mi) = (j / m, j % m);
            let ev = |p: &Vector3<f64>| {
                let mut v = Vector3::zeros();
                v[c] = basis.mons.values(p)[mi];
                v
            };
            let col = quad.apply(&ev);
            for (i, x) in col.into_iter().enumerate() {
                dof[(i, j)] = x;
            }
        }
        let svd = dof.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        basis.condition_number = smax / smin;
        let inv = dof
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("BDM({degree}) degree-of-freedom matrix")))?;
        basis.shapes = (0..n)
            .map(|j| {
                let mut p: VectorPoly = Default::default();
                for (c, comp) in p.iter_mut().enumerate() {
                    *comp = (0..m).map(|mi| inv[(c * m + mi, j)]).collect();
                }
                p
            })
            .collect();
        Ok(basis)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    /// Face DOFs per face, `(k+1)(k+2)/2`.
    pub fn dofs_per_face(&self) -> usize {
        self.face_lattice.len()
    }

    pub fn interior_dofs(&self) -> usize {
        self.interior_tests.len()
    }

    pub fn functionals(&self) -> &[DofFunctional] {
        &self.functionals
    }

    /// Face lattice multi-indices, in local DOF order within a face.
    pub fn face_lattice(&self) -> &[Vec<usize>] {
        &self.face_lattice
    }

    pub fn shape(&self, i: usize) -> &VectorPoly {
        &self.shapes[i]
    }

    pub fn monomials(&self) -> &Monomials {
        &self.mons
    }

    /// 2-norm condition number of the functional matrix over the monomial basis.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    /// Value of the face lattice Lagrange function `node` at triangle point `st`.
    pub fn face_node_function(&self, node: usize, st: &Vector2<f64>) -> f64 {
        eval_tri_poly(&self.tri_exps, &self.tri_coeffs[node], st.x, st.y)
    }

    pub fn interior_test(&self, i: usize, p: &Vector3<f64>) -> Vector3<f64> {
        let v = self.mons.values(p);
        eval_vector(&self.interior_tests[i], &v)
    }

    pub fn tabulate(&self, p: &Vector3<f64>) -> ShapeValues {
        let t = self.mons.tabulate(p);
        let mut values = Vec::with_capacity(self.shapes.len());
        let mut grads = Vec::with_capacity(self.shapes.len());
        for s in &self.shapes {
            values.push(Vector3::new(t.value(&s[0]), t.value(&s[1]), t.value(&s[2])));
            let mut g = Matrix3::zeros();
            for a in 0..3 {
                g.set_row(a, &t.grad(&s[a]).transpose());
            }
            grads.push(g);
        }
        ShapeValues { values, grads }
    }

    pub fn values(&self, p: &Vector3<f64>) -> Vec<Vector3<f64>> {
        let v = self.mons.values(p);
        self.shapes.iter().map(|s| eval_vector(s, &v)).collect()
    }

    /// Quadrature data that applies every DOF functional to a reference field.
    pub fn functional_quadrature(&self, degree: usize) -> Result<FunctionalQuadrature> {
        let tri = tri_quadrature(degree)?;
        let tet = tet_quadrature(degree)?;
        let mut faces = Vec::with_capacity(4);
        for f in 0..4 {
            let scale = ref_face_jacobian(f);
            let pts = tri
                .points
                .iter()
                .zip(&tri.weights)
                .map(|(st, w)| {
                    let lam = (0..self.face_lattice.len())
                        .map(|j| self.face_node_function(j, st))
                        .collect();
                    FacePoint {
                        st: *st,
                        xi: ref_face_point(f, st),
                        weight: w * scale,
                        node_values: lam,
                    }
                })
                .collect();
            faces.push(pts);
        }
        let volume = tet
            .points
            .iter()
            .zip(&tet.weights)
            .map(|(p, w)| {
                let tests = (0..self.interior_tests.len())
                    .map(|i| self.interior_test(i, p))
                    .collect();
                (*p, *w, tests)
            })
            .collect();
        Ok(FunctionalQuadrature { faces, volume })
    }
}

fn eval_vector(p: &VectorPoly, mono_values: &[f64]) -> Vector3<f64> {
    Vector3::from_fn(|c, _| p[c].iter().zip(mono_values).map(|(a, b)| a * b).sum())
}

#[derive(Clone, Debug)]
pub struct FacePoint {
    pub st: Vector2<f64>,
    pub xi: Vector3<f64>,
    /// Quadrature weight times the reference face area scaling.
    pub weight: f64,
    pub node_values: Vec<f64>,
}

/// Quadrature points carrying the test functions of the BDM functionals.
#[derive(Clone, Debug)]
pub struct FunctionalQuadrature {
    pub faces: Vec<Vec<FacePoint>>,
    pub volume: Vec<(Vector3<f64>, f64, Vec<Vector3<f64>>)>,
}

impl FunctionalQuadrature {
    /// Applies all functionals (local order) to the reference field `v`.
    pub fn apply(&self, v: &dyn Fn(&Vector3<f64>) -> Vector3<f64>) -> Vec<f64> {
        let mut out = Vec::new();
        for f in 0..4 {
            out.extend(self.face_moments(f, |p| v(&p.xi)));
        }
        out.extend(self.interior_moments(|p| v(p)));
        out
    }

    /// Moments `int_F vhat.nhat q_j dshat` for local face `f`, from values of the
    /// reference field at the face points.
    pub fn face_moments(&self, f: usize, mut v: impl FnMut(&FacePoint) -> Vector3<f64>) -> Vec<f64> {
        let n = ref_face_normal(f);
        let nodes = self.faces[f][0].node_values.len();
        let mut out = vec![0.0; nodes];
        for p in &self.faces[f] {
            let flux = v(p).dot(&n) * p.weight;
            for (o, l) in out.iter_mut().zip(&p.node_values) {
                *o += flux * l;
            }
        }
        out
    }

    pub fn interior_moments(&self, mut v: impl FnMut(&Vector3<f64>) -> Vector3<f64>) -> Vec<f64> {
        let Some(first) = self.volume.first() else {
            return Vec::new();
        };
        let mut out = vec![0.0; first.2.len()];
        if out.is_empty() {
            return out;
        }
        for (p, w, tests) in &self.volume {
            let val = v(p);
            for (o, q) in out.iter_mut().zip(tests) {
                *o += w * val.dot(q);
            }
        }
        out
    }
}

/// Orthonormal basis (reference L2) of the first-kind Nedelec space of degree
/// `order`: `P_{order-1}^3 + x cross homogeneous P_{order-1}^3`.
fn nedelec_tests(mons: &Monomials, order: usize) -> Vec<VectorPoly> {
    let m = mons.len();
    let low = order - 1;
    let mut cands: Vec<VectorPoly> = Vec::new();
    for c in 0..3 {
        for (i, e) in mons.exponents().iter().enumerate() {
            if e.iter().sum::<usize>() <= low {
                let mut p: VectorPoly = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
                p[c][i] = 1.0;
                cands.push(p);
            }
        }
    }
    let shift = |e: [usize; 3], axis: usize| {
        let mut e = e;
        e[axis] += 1;
        mons.index_of(e).expect("degree fits")
    };
    for c in 0..3 {
        for e in mons.exponents().iter().filter(|e| e.iter().sum::<usize>() == low) {
            // x cross (m e_c)
            let mut p: VectorPoly = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
            let (a, b) = ((c + 1) % 3, (c + 2) % 3);
            // (x cross e_c)_a = x_b, (x cross e_c)_b = -x_a
            p[a][shift(*e, b)] += 1.0;
            p[b][shift(*e, a)] -= 1.0;
            cands.push(p);
        }
    }
    let inner = |p: &VectorPoly, q: &VectorPoly| {
        let ex = mons.exponents();
        let mut s = 0.0;
        for c in 0..3 {
            for (i, a) in p[c].iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                for (j, b) in q[c].iter().enumerate() {
                    if *b != 0.0 {
                        let e = [ex[i][0] + ex[j][0], ex[i][1] + ex[j][1], ex[i][2] + ex[j][2]];
                        s += a * b * tet_monomial_integral(e);
                    }
                }
            }
        }
        s
    };
    let mut out: Vec<VectorPoly> = Vec::new();
    for mut p in cands {
        let norm0 = inner(&p, &p).sqrt();
        for _ in 0..2 {
            for q in &out {
                let d = inner(&p, q);
                for c in 0..3 {
                    for (x, y) in p[c].iter_mut().zip(&q[c]) {
                        *x -= d * y;
                    }
                }
            }
        }
        let norm = inner(&p, &p).sqrt();
        if norm > 1e-8 * norm0 {
            for comp in p.iter_mut() {
                comp.iter_mut().for_each(|x| *x /= norm);
            }
            out.push(p);
        }
    }
    out
}

/// Orthonormal (on the reference tetrahedron) basis of `P_degree`.
#[derive(Clone, Debug)]
pub struct PressureReferenceBasis {
    degree: usize,
    mons: Monomials,
    coeffs: Vec<Vec<f64>>,
}

impl PressureReferenceBasis {
    pub fn new(degree: usize) -> Self {
        let mons = Monomials::new(degree);
        let n = mons.len();
        let mut mass = DMatrix::zeros(n, n);
        let ex = mons.exponents();
        for i in 0..n {
            for j in 0..n {
                mass[(i, j)] = tet_monomial_integral([ex[i][0] + ex[j][0], ex[i][1] + ex[j][1], ex[i][2] + ex[j][2]]);
            }
        }
        // with M = L L^T, the columns of L^{-T} are orthonormal
        let l = mass.cholesky().expect("monomial mass matrix is SPD").l();
        let linv_t = l.try_inverse().expect("triangular factor invertible").transpose();
        let coeffs = (0..n).map(|j| linv_t.column(j).iter().copied().collect()).collect();
        Self { degree, mons, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn values(&self, p: &Vector3<f64>) -> Vec<f64> {
        let v = self.mons.values(p);
        self.coeffs
            .iter()
            .map(|c| c.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Coefficient of the first basis function that represents the constant 1.
    pub fn constant_coefficient(&self) -> f64 {
        1.0 / self.coeffs[0][0]
    }

    pub fn coefficients(&self, i: usize) -> &[f64] {
        &self.coeffs[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        for k in 1..=3 {
            let b = BdmReferenceBasis::new(k).unwrap();
            assert_eq!(b.len(), 3 * (k + 1) * (k + 2) * (k + 3) / 6);
            assert_eq!(b.dofs_per_face(), (k + 1) * (k + 2) / 2);
            let p = PressureReferenceBasis::new(k - 1);
            assert_eq!(p.len(), k * (k + 1) * (k + 2) / 6);
        }
    }

    #[test]
    fn functionals_are_dual_to_shapes() {
        for k in 1..=3 {
            let b = BdmReferenceBasis::new(k).unwrap();
            assert!(b.condition_number().is_finite());
            let q = b.functional_quadrature(2 * k + 2).unwrap();
            for j in 0..b.len() {
                let vals = q.apply(&|p| b.values(p)[j]);
                for (i, v) in vals.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-12, "k={k} l_{i}(phi_{j}) = {v}");
                }
            }
        }
    }

    #[test]
    fn pressure_basis_is_orthonormal() {
        let rule = tet_quadrature(8).unwrap();
        for d in 0..=2 {
            let p = PressureReferenceBasis::new(d);
            let n = p.len();
            let mut mass = DMatrix::<f64>::zeros(n, n);
            for (x, w) in rule.iter() {
                let v = p.values(x);
                for i in 0..n {
                    for j in 0..n {
                        mass[(i, j)] += w * v[i] * v[j];
                    }
                }
            }
            assert!((mass - DMatrix::identity(n, n)).amax() < 1e-12);
            let c = p.constant_coefficient();
            assert!((p.values(&Vector3::new(0.1, 0.2, 0.3))[0] * c - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gradients_match_differences() {
        let b = BdmReferenceBasis::new(2).unwrap();
        let p = Vector3::new(0.2, 0.3, 0.1);
        let t = b.tabulate(&p);
        let h = 1e-6;
        for j in 0..3 {
            let mut e = Vector3::zeros();
            e[j] = h;
            let (vp, vm) = (b.values(&(p + e)), b.values(&(p - e)));
            for i in 0..b.len() {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                assert!((t.grads[i].column(j) - fd).norm() < 1e-7);
            }
        }
    }
}
