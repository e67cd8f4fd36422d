use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;

use super::Discretization;
use crate::error::{Error, Result};

/// Per-element Gram matrices of the physical shape-function gradients and their
/// pseudo-inverses. The gradient space of the local BDM space has a kernel (the
/// constant fields), hence the pseudo-inverse.
pub struct LiftingWorkspace {
    gram: Vec<DMatrix<f64>>,
    pinv: Vec<DMatrix<f64>>,
}

/// `L_F(w)` as coefficients over the (unsigned) local shape functions of the
/// elements adjacent to `F`.
#[derive(Clone, Debug)]
pub struct LiftedField {
    pub face: usize,
    pub parts: Vec<(usize, Vec<f64>)>,
}

impl LiftingWorkspace {
    pub fn new(disc: &Discretization) -> Result<Self> {
        let n = disc.space.dofs.local_velocity;
        let pairs: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..disc.mesh.num_elements())
            .into_par_iter()
            .map(|e| -> Result<_> {
                let mut g = DMatrix::zeros(n, n);
                for (w, ps) in disc.element_points(e)? {
                    for i in 0..n {
                        for j in 0..=i {
                            let v = w * ps.grads[i].dot(&ps.grads[j]);
                            g[(i, j)] += v;
                            if i != j {
                                g[(j, i)] += v;
                            }
                        }
                    }
                }
                let svd = g.clone().svd(true, true);
                let tol = 1e-11 * svd.singular_values.max();
                let pinv = svd
                    .pseudo_inverse(tol)
                    .map_err(|m| Error::Singular(format!("lifting Gram of element {e}: {m}")))?;
                Ok((g, pinv))
            })
            .collect::<Result<_>>()?;
        let (gram, pinv) = pairs.into_iter().unzip();
        Ok(Self { gram, pinv })
    }

    pub fn gram(&self, e: usize) -> &DMatrix<f64> {
        &self.gram[e]
    }

    /// `(grad u, L_F(w))` for `u` given by global velocity coefficients.
    pub fn pair_with_gradient(&self, disc: &Discretization, lifted: &LiftedField, u: &[f64]) -> f64 {
        lifted
            .parts
            .iter()
            .map(|(e, c)| {
                let ul = DVector::from_vec(disc.space.dofs.local_velocity_coefficients(*e, u));
                DVector::from_column_slice(c).dot(&(&self.gram[*e] * ul))
            })
            .sum()
    }

    /// `|L_F(w)|_{L2}`.
    pub fn norm(&self, lifted: &LiftedField) -> f64 {
        lifted
            .parts
            .iter()
            .map(|(e, c)| {
                let c = DVector::from_column_slice(c);
                c.dot(&(&self.gram[*e] * &c))
            })
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }
}

/// Lifting of the jump of a broken field across face `face`: the element of the
/// broken gradient space with `(L_F(w), tau) = int_F [[w]] : {tau}` for all `tau`.
///
/// `w(e, xhat)` evaluates the field on element `e` at reference point `xhat`.
pub fn lifting_apply(
    disc: &Discretization,
    ws: &LiftingWorkspace,
    w: &dyn Fn(usize, &Vector3<f64>) -> Vector3<f64>,
    face: usize,
) -> Result<LiftedField> {
    let rec = &disc.mesh.faces[face];
    let n = disc.space.dofs.local_velocity;
    let avg = if rec.sides.len() == 2 { 0.5 } else { 1.0 };
    let mut parts = Vec::with_capacity(rec.sides.len());
    for (side, s) in rec.sides.iter().enumerate() {
        let mut r = DVector::zeros(n);
        for q in &disc.faces.points[face] {
            let mut jump = w(rec.sides[0].element, &q.xi[0]);
            if rec.sides.len() == 2 {
                jump -= w(rec.sides[1].element, &q.xi[1]);
            }
            if jump == Vector3::zeros() {
                continue;
            }
            let ps = disc.face_shapes(face, side, q)?;
            for a in 0..n {
                r[a] += q.weight * avg * jump.dot(&(ps.grads[a] * q.normal));
            }
        }
        let c = &ws.pinv[s.element] * r;
        parts.push((s.element, c.as_slice().to_vec()));
    }
    Ok(LiftedField { face, parts })
}

/// The lifted form `(grad u, grad v) - (grad u, L(v)) - (grad v, L(u))
/// + alpha sum_F h_F^{-1} int [[u]]:[[v]]` for global velocity coefficients.
pub fn a_dg_via_lifting(disc: &Discretization, ws: &LiftingWorkspace, alpha: f64, u: &[f64], v: &[f64]) -> Result<f64> {
    let dm = &disc.space.dofs;
    let mut total = 0.0;
    for e in 0..disc.mesh.num_elements() {
        let ul = DVector::from_vec(dm.local_velocity_coefficients(e, u));
        let vl = DVector::from_vec(dm.local_velocity_coefficients(e, v));
        total += vl.dot(&(&ws.gram[e] * ul));
    }
    let field = |c: &[f64]| {
        let c = c.to_vec();
        move |e: usize, xi: &Vector3<f64>| {
            let t = disc.space.bdm.tabulate(xi);
            let Ok(jd) = disc.maps[e].jacobian_at(xi) else {
                return Vector3::from_element(f64::NAN);
            };
            let ps = crate::spaces::push_forward(jd, &t);
            dm.local_velocity_coefficients(e, &c)
                .iter()
                .zip(&ps.values)
                .map(|(a, phi)| phi * *a)
                .sum()
        }
    };
    let uf = field(u);
    let vf = field(v);
    for fid in 0..disc.mesh.faces.len() {
        let lu = lifting_apply(disc, ws, &uf, fid)?;
        let lv = lifting_apply(disc, ws, &vf, fid)?;
        total -= ws.pair_with_gradient(disc, &lv, u) + ws.pair_with_gradient(disc, &lu, v);
        let rec = &disc.mesh.faces[fid];
        let h = disc.faces.h[fid];
        for q in &disc.faces.points[fid] {
            let mut ju = uf(rec.sides[0].element, &q.xi[0]);
            let mut jv = vf(rec.sides[0].element, &q.xi[0]);
            if rec.sides.len() == 2 {
                ju -= uf(rec.sides[1].element, &q.xi[1]);
                jv -= vf(rec.sides[1].element, &q.xi[1]);
            }
            total += q.weight * alpha / h * ju.dot(&jv);
        }
    }
    if !total.is_finite() {
        return Err(Error::Singular("non-invertible element map in lifted form".into()));
    }
    Ok(total)
}
