//! Reference BDM(k) and P(k-1) bases, global DOF numbering, Piola push-forward
//! evaluation, interpolation and projection, and boundary normal-trace data.

mod dofmap;
mod reference;

pub use dofmap::{build_dof_map, DofMap};
pub use reference::{
    BdmReferenceBasis, DofFunctional, FacePoint, FunctionalQuadrature, PressureReferenceBasis, ShapeValues, VectorPoly,
};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{tet_quadrature, CurvedElementMap, JacobianData};
use crate::mesh::StraightMesh;

/// Vector-valued function of physical coordinates.
pub type VectorField<'a> = &'a (dyn Fn(&Vector3<f64>) -> Vector3<f64> + Sync);
/// Scalar function of physical coordinates.
pub type ScalarField<'a> = &'a (dyn Fn(&Vector3<f64>) -> f64 + Sync);

/// The velocity/pressure pair of discrete spaces on one mesh.
#[derive(Clone, Debug)]
pub struct FeSpace {
    pub bdm: BdmReferenceBasis,
    pub pressure: PressureReferenceBasis,
    pub dofs: DofMap,
}

impl FeSpace {
    pub fn new(mesh: &StraightMesh, degree: usize) -> Result<Self> {
        let bdm = BdmReferenceBasis::new(degree)?;
        let pressure = PressureReferenceBasis::new(degree - 1);
        let dofs = build_dof_map(mesh, degree);
        debug_assert_eq!(dofs.local_velocity, bdm.len());
        Ok(Self { bdm, pressure, dofs })
    }

    pub fn degree(&self) -> usize {
        self.bdm.degree()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldCoefficients {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl FieldCoefficients {
    pub fn zeros(dofs: &DofMap) -> Self {
        Self {
            velocity: vec![0.0; dofs.n_velocity],
            pressure: vec![0.0; dofs.n_pressure],
        }
    }
}

/// Piola image `J vhat / J_d`.
pub fn piola_value(jd: &JacobianData, vhat: &Vector3<f64>) -> Vector3<f64> {
    jd.jac * vhat / jd.det
}

/// Physical gradient of the Piola image of a field with reference value `vhat`
/// and reference gradient `ghat` (`ghat[(i, j)] = d vhat_i / d xhat_j`).
pub fn piola_gradient(jd: &JacobianData, vhat: &Vector3<f64>, ghat: &Matrix3<f64>) -> Matrix3<f64> {
    let inv_det = 1.0 / jd.det;
    let mut inner = ghat * inv_det;
    if jd.det_gradient != Vector3::zeros() || jd.second_derivatives.iter().any(|h| *h != Matrix3::zeros()) {
        // C_ij = vhat_i dJ_d/dxhat_j, D_ij = sum_k vhat_k d^2 x_i / dxhat_j dxhat_k
        let c = vhat * jd.det_gradient.transpose();
        let d = Matrix3::<f64>::from_fn(|i, j| (0..3).map(|k| vhat[k] * jd.second_derivatives[i][(j, k)]).sum::<f64>());
        inner -= c * (inv_det * inv_det);
        return jd.jac * inner * jd.jac_inv + d * jd.jac_inv * inv_det;
    }
    jd.jac * inner * jd.jac_inv
}

/// Shape functions of one element pushed forward to a physical point.
#[derive(Clone, Debug)]
pub struct PhysicalShapes {
    pub jd: JacobianData,
    pub values: Vec<Vector3<f64>>,
    pub grads: Vec<Matrix3<f64>>,
    pub divs: Vec<f64>,
}

pub fn push_forward(jd: JacobianData, reference: &ShapeValues) -> PhysicalShapes {
    let n = reference.values.len();
    let mut values = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    let mut divs = Vec::with_capacity(n);
    for (v, g) in reference.values.iter().zip(&reference.grads) {
        values.push(piola_value(&jd, v));
        grads.push(piola_gradient(&jd, v, g));
        divs.push(g.trace() / jd.det);
    }
    PhysicalShapes {
        jd,
        values,
        grads,
        divs,
    }
}

fn combine<T>(items: &[T], coeffs: &[f64], zero: T) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    items.iter().zip(coeffs).fold(zero, |acc, (x, c)| acc + *x * *c)
}

/// Velocity `u_h(M_h(xhat))` on element `map.element`.
pub fn eval_velocity_physical(
    space: &FeSpace,
    coeffs: &[f64],
    map: &CurvedElementMap,
    ref_point: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let jd = map.jacobian_at(ref_point)?;
    let local = space.dofs.local_velocity_coefficients(map.element, coeffs);
    let vhat = combine(&space.bdm.values(ref_point), &local, Vector3::zeros());
    Ok(piola_value(&jd, &vhat))
}

pub fn eval_velocity_gradient_physical(
    space: &FeSpace,
    coeffs: &[f64],
    map: &CurvedElementMap,
    ref_point: &Vector3<f64>,
) -> Result<Matrix3<f64>> {
    let jd = map.jacobian_at(ref_point)?;
    let local = space.dofs.local_velocity_coefficients(map.element, coeffs);
    let t = space.bdm.tabulate(ref_point);
    let vhat = combine(&t.values, &local, Vector3::zeros());
    let ghat = combine(&t.grads, &local, Matrix3::zeros());
    Ok(piola_gradient(&jd, &vhat, &ghat))
}

pub fn eval_divergence_physical(
    space: &FeSpace,
    coeffs: &[f64],
    map: &CurvedElementMap,
    ref_point: &Vector3<f64>,
) -> Result<f64> {
    let jd = map.jacobian_at(ref_point)?;
    let local = space.dofs.local_velocity_coefficients(map.element, coeffs);
    let t = space.bdm.tabulate(ref_point);
    let ghat = combine(&t.grads, &local, Matrix3::zeros());
    Ok(ghat.trace() / jd.det)
}

/// Pressure `p_h(M_h(xhat))` on element `element`.
pub fn eval_pressure(space: &FeSpace, coeffs: &[f64], element: usize, ref_point: &Vector3<f64>) -> f64 {
    let vals = space.pressure.values(ref_point);
    space
        .dofs
        .pressure_dofs(element)
        .zip(vals)
        .map(|(g, v)| coeffs[g] * v)
        .sum()
}

fn pullback(jd: &JacobianData, v: &Vector3<f64>) -> Vector3<f64> {
    jd.jac_inv * v * jd.det
}

/// Canonical BDM interpolant: the reference functionals applied to the Piola
/// pullback `J_d J^{-1} (v o M_h)` on each element. Face DOFs are computed once,
/// from the face's orientation owner.
pub fn bdm_interpolate(
    field: VectorField,
    mesh: &StraightMesh,
    maps: &[CurvedElementMap],
    space: &FeSpace,
) -> Result<Vec<f64>> {
    let quad = space.bdm.functional_quadrature(2 * space.degree() + 2)?;
    let nf = space.dofs.dofs_per_face;
    let mut out = vec![0.0; space.dofs.n_velocity];
    let face_vals: Vec<Vec<f64>> = (0..mesh.faces.len())
        .into_par_iter()
        .map(|fid| -> Result<Vec<f64>> {
            let owner = mesh.faces[fid].owner();
            let map = &maps[owner.element];
            let mut err = None;
            let moments = quad.face_moments(owner.local_face, |p| match map.jacobian_at(&p.xi) {
                Ok(jd) => pullback(&jd, &field(&jd.point)),
                Err(e) => {
                    err = Some(e);
                    Vector3::zeros()
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            // reorder local lattice nodes to global numbering
            let dofs = space.dofs.velocity_dofs(owner.element);
            let mut vals = vec![0.0; nf];
            for (j, m) in moments.into_iter().enumerate() {
                vals[dofs[owner.local_face * nf + j] - fid * nf] = m;
            }
            Ok(vals)
        })
        .collect::<Result<_>>()?;
    for (fid, vals) in face_vals.into_iter().enumerate() {
        out[fid * nf..(fid + 1) * nf].copy_from_slice(&vals);
    }
    if space.dofs.interior_per_element > 0 {
        let interior: Vec<Vec<f64>> = maps
            .par_iter()
            .map(|map| -> Result<Vec<f64>> {
                let mut err = None;
                let m = quad.interior_moments(|p| match map.jacobian_at(p) {
                    Ok(jd) => pullback(&jd, &field(&jd.point)),
                    Err(e) => {
                        err = Some(e);
                        Vector3::zeros()
                    }
                });
                err.map_or(Ok(m), Err)
            })
            .collect::<Result<_>>()?;
        for (e, vals) in interior.into_iter().enumerate() {
            let dofs = space.dofs.velocity_dofs(e);
            for (i, v) in vals.into_iter().enumerate() {
                out[dofs[4 * nf + i]] = v;
            }
        }
    }
    Ok(out)
}

/// Element pressure mass matrices `int psi_i psi_j J_d`, pressure moments
/// `int psi_i J_d` and element volumes of `Omega_h`.
#[derive(Clone, Debug)]
pub struct PressureMass {
    pub blocks: Vec<DMatrix<f64>>,
    pub moments: Vec<Vec<f64>>,
    pub volumes: Vec<f64>,
    pub total_volume: f64,
}

impl PressureMass {
    pub fn new(space: &FeSpace, maps: &[CurvedElementMap]) -> Result<Self> {
        let rule = tet_quadrature(2 * space.degree() + 2)?;
        let tab: Vec<Vec<f64>> = rule.points.iter().map(|p| space.pressure.values(p)).collect();
        let np = space.pressure.len();
        let per: Vec<(DMatrix<f64>, Vec<f64>, f64)> = maps
            .par_iter()
            .map(|map| -> Result<_> {
                let mut m = DMatrix::zeros(np, np);
                let mut mom = vec![0.0; np];
                let mut vol = 0.0;
                for ((p, w), vals) in rule.iter().zip(&tab) {
                    let det = map.jacobian_at(p)?.det;
                    vol += w * det;
                    for i in 0..np {
                        mom[i] += w * det * vals[i];
                        for j in 0..np {
                            m[(i, j)] += w * det * vals[i] * vals[j];
                        }
                    }
                }
                Ok((m, mom, vol))
            })
            .collect::<Result<_>>()?;
        let mut out = Self {
            blocks: Vec::with_capacity(per.len()),
            moments: Vec::with_capacity(per.len()),
            volumes: Vec::with_capacity(per.len()),
            total_volume: 0.0,
        };
        for (m, mom, vol) in per {
            out.total_volume += vol;
            out.blocks.push(m);
            out.moments.push(mom);
            out.volumes.push(vol);
        }
        Ok(out)
    }

    /// Mean of `p_h` over `Omega_h`.
    pub fn mean(&self, space: &FeSpace, p: &[f64]) -> f64 {
        let s: f64 = self
            .moments
            .iter()
            .enumerate()
            .map(|(e, m)| space.dofs.pressure_dofs(e).zip(m).map(|(g, w)| p[g] * w).sum::<f64>())
            .sum();
        s / self.total_volume
    }

    /// Subtracts the mean over `Omega_h`.
    pub fn remove_mean(&self, space: &FeSpace, p: &mut [f64]) {
        let mean = self.mean(space, p);
        let c = space.pressure.constant_coefficient();
        for e in 0..self.blocks.len() {
            p[space.dofs.pressure_dofs(e).start] -= mean * c;
        }
    }

    /// Coefficient vector of the constant function 1.
    pub fn constant_mode(&self, space: &FeSpace) -> Vec<f64> {
        let mut v = vec![0.0; space.dofs.n_pressure];
        for e in 0..self.blocks.len() {
            v[space.dofs.pressure_dofs(e).start] = space.pressure.constant_coefficient();
        }
        v
    }

    /// `M_p x`.
    pub fn apply(&self, space: &FeSpace, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (e, b) in self.blocks.iter().enumerate() {
            let r = space.dofs.pressure_dofs(e);
            let xe = DVector::from_column_slice(&x[r.clone()]);
            y[r].copy_from_slice((b * xe).as_slice());
        }
        y
    }
}

/// `J_d`-weighted L2 projection onto the pressure space, shifted to zero mean
/// over `Omega_h`.
pub fn pressure_project(
    field: ScalarField,
    mesh: &StraightMesh,
    maps: &[CurvedElementMap],
    space: &FeSpace,
) -> Result<Vec<f64>> {
    debug_assert_eq!(mesh.num_elements(), maps.len());
    let mass = PressureMass::new(space, maps)?;
    let rule = tet_quadrature(2 * space.degree() + 4)?;
    let tab: Vec<Vec<f64>> = rule.points.iter().map(|p| space.pressure.values(p)).collect();
    let np = space.pressure.len();
    let local: Vec<Vec<f64>> = maps
        .par_iter()
        .zip(&mass.blocks)
        .map(|(map, block)| -> Result<Vec<f64>> {
            let mut rhs = DVector::zeros(np);
            for ((p, w), vals) in rule.iter().zip(&tab) {
                let jd = map.jacobian_at(p)?;
                let f = field(&jd.point) * w * jd.det;
                for i in 0..np {
                    rhs[i] += f * vals[i];
                }
            }
            let chol = block
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Singular(format!("weighted pressure mass of element {}", map.element)))?;
            Ok(chol.solve(&rhs).as_slice().to_vec())
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; space.dofs.n_pressure];
    for (e, v) in local.into_iter().enumerate() {
        out[space.dofs.pressure_dofs(e)].copy_from_slice(&v);
    }
    mass.remove_mean(space, &mut out);
    Ok(out)
}

/// Strongly imposed values of the boundary normal-moment DOFs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormalTraceConstraint {
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
}

impl NormalTraceConstraint {
    pub fn apply(&self, velocity: &mut [f64]) {
        for (&d, &v) in self.dofs.iter().zip(&self.values) {
            velocity[d] = v;
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// Constrains every boundary face-moment DOF: to zero without data, otherwise to
/// the normal moments `int_F g.n q_j ds` of `g`. For data, the uniform part of the
/// discrete boundary flux is removed so that the constrained field has exactly
/// zero net flux through the discrete boundary, which the divergence constraint
/// requires.
pub fn impose_zero_normal_trace(
    mesh: &StraightMesh,
    maps: &[CurvedElementMap],
    space: &FeSpace,
    data: Option<VectorField>,
) -> Result<NormalTraceConstraint> {
    let dofs = space.dofs.boundary_normal_dofs.clone();
    let Some(g) = data else {
        let values = vec![0.0; dofs.len()];
        return Ok(NormalTraceConstraint { dofs, values });
    };
    let quad = space.bdm.functional_quadrature(2 * space.degree() + 2)?;
    let nf = space.dofs.dofs_per_face;
    let boundary: Vec<usize> = (0..mesh.faces.len()).filter(|&f| mesh.faces[f].is_boundary()).collect();
    let per_face: Vec<(Vec<f64>, Vec<f64>)> = boundary
        .par_iter()
        .map(|&fid| -> Result<_> {
            let side = mesh.faces[fid].owner();
            let map = &maps[side.element];
            let mut moments = vec![0.0; nf];
            let mut measure = vec![0.0; nf];
            let nref = crate::geometry::ref_face_normal(side.local_face);
            for p in &quad.faces[side.local_face] {
                let jd = map.jacobian_at(&p.xi)?;
                let flux = pullback(&jd, &g(&jd.point)).dot(&nref) * p.weight;
                let ds = jd.surface_factor(&nref) * p.weight;
                for j in 0..nf {
                    moments[j] += flux * p.node_values[j];
                    measure[j] += ds * p.node_values[j];
                }
            }
            let local = space.dofs.velocity_dofs(side.element);
            let mut m = vec![0.0; nf];
            let mut s = vec![0.0; nf];
            for j in 0..nf {
                let slot = local[side.local_face * nf + j] - fid * nf;
                m[slot] = moments[j];
                s[slot] = measure[j];
            }
            Ok((m, s))
        })
        .collect::<Result<_>>()?;
    let total_flux: f64 = per_face.iter().flat_map(|(m, _)| m).sum();
    let area: f64 = per_face.iter().flat_map(|(_, s)| s).sum();
    let shift = total_flux / area;
    let mut values = Vec::with_capacity(dofs.len());
    for (m, s) in &per_face {
        values.extend(m.iter().zip(s).map(|(a, b)| a - shift * b));
    }
    Ok(NormalTraceConstraint { dofs, values })
}
