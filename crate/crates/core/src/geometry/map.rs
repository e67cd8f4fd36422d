use std::collections::HashSet;
use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use super::quadrature::{tet_quadrature, tri_quadrature};
use super::{ref_face_normal, ref_face_point, ref_vertex};
use crate::error::{Error, Result};
use crate::mesh::StraightMesh;
use crate::poly::{lattice, tet_lagrange_basis, Monomials};

struct GeometryBasis {
    mons: Monomials,
    coeffs: Vec<Vec<f64>>,
    lattice: Vec<Vec<usize>>,
}

fn geometry_basis(degree: usize) -> &'static GeometryBasis {
    static CACHE: [OnceLock<GeometryBasis>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    CACHE[degree].get_or_init(|| {
        let (mons, coeffs, _) = tet_lagrange_basis(degree);
        GeometryBasis {
            mons,
            coeffs,
            lattice: lattice(4, degree),
        }
    })
}

/// Jacobian data of an element map at one reference point.
#[derive(Clone, Copy, Debug)]
pub struct JacobianData {
    /// Physical image of the reference point.
    pub point: Vector3<f64>,
    /// `d x_i / d xhat_j`.
    pub jac: Matrix3<f64>,
    pub jac_inv: Matrix3<f64>,
    pub det: f64,
    /// `second_derivatives[i][(j, k)] = d^2 x_i / (d xhat_j d xhat_k)`.
    pub second_derivatives: [Matrix3<f64>; 3],
    /// `d det / d xhat_j`.
    pub det_gradient: Vector3<f64>,
}

impl JacobianData {
    /// `ds / dshat` on a face with reference unit normal `n_ref`.
    pub fn surface_factor(&self, n_ref: &Vector3<f64>) -> f64 {
        self.det * (self.jac_inv.transpose() * n_ref).norm()
    }

    /// Physical unit normal corresponding to the reference normal `n_ref`.
    pub fn physical_normal(&self, n_ref: &Vector3<f64>) -> Vector3<f64> {
        (self.jac_inv.transpose() * n_ref).normalize()
    }
}

/// Degree-k Lagrange map from the unit reference tetrahedron onto a (possibly
/// curved) physical element. It composes the affine map onto the straight
/// element with the geometry map restricted to it.
#[derive(Clone, Debug)]
pub struct CurvedElementMap {
    pub element: usize,
    pub degree: usize,
    /// Physical positions of the degree-k lattice nodes, ordered as [`lattice`].
    pub node_coords: Vec<Vector3<f64>>,
    pub is_affine: bool,
    origin: Vector3<f64>,
    affine_jac: Matrix3<f64>,
    affine_jac_inv: Matrix3<f64>,
    affine_det: f64,
    /// Monomial coefficients of each physical coordinate (curved maps only).
    coord_coeffs: [Vec<f64>; 3],
}

impl CurvedElementMap {
    pub fn affine_jacobian(&self) -> &Matrix3<f64> {
        &self.affine_jac
    }

    /// Straight (affine) image of a reference point.
    pub fn straight_point(&self, xi: &Vector3<f64>) -> Vector3<f64> {
        self.origin + self.affine_jac * xi
    }

    pub fn point(&self, xi: &Vector3<f64>) -> Vector3<f64> {
        if self.is_affine {
            return self.straight_point(xi);
        }
        let vals = geometry_basis(self.degree).mons.values(xi);
        Vector3::from_fn(|i, _| self.coord_coeffs[i].iter().zip(&vals).map(|(c, v)| c * v).sum())
    }

    /// Jacobian data evaluated analytically from the Lagrange basis.
    pub fn jacobian_at(&self, xi: &Vector3<f64>) -> Result<JacobianData> {
        let data = if self.is_affine {
            JacobianData {
                point: self.straight_point(xi),
                jac: self.affine_jac,
                jac_inv: self.affine_jac_inv,
                det: self.affine_det,
                second_derivatives: [Matrix3::zeros(); 3],
                det_gradient: Vector3::zeros(),
            }
        } else {
            let t = geometry_basis(self.degree).mons.tabulate(xi);
            let point = Vector3::from_fn(|i, _| t.value(&self.coord_coeffs[i]));
            let mut jac = Matrix3::zeros();
            let mut second = [Matrix3::zeros(); 3];
            for i in 0..3 {
                let g = t.grad(&self.coord_coeffs[i]);
                for j in 0..3 {
                    jac[(i, j)] = g[j];
                }
                second[i] = t.hessian(&self.coord_coeffs[i]);
            }
            let det = jac.determinant();
            if !(det > 0.0) {
                return Err(Error::SingularMap {
                    element: self.element,
                    det,
                });
            }
            let jac_inv = jac.try_inverse().ok_or(Error::SingularMap {
                element: self.element,
                det,
            })?;
            // Jacobi's formula: d det / d xhat_j = det * tr(J^{-1} dJ/dxhat_j)
            let det_gradient = Vector3::from_fn(|j, _| {
                let dj = Matrix3::from_fn(|a, l| second[a][(l, j)]);
                det * (jac_inv * dj).trace()
            });
            JacobianData {
                point,
                jac,
                jac_inv,
                det,
                second_derivatives: second,
                det_gradient,
            }
        };
        if !(data.det > 0.0) {
            return Err(Error::SingularMap {
                element: self.element,
                det: data.det,
            });
        }
        Ok(data)
    }

    /// `J_d * |J^{-T} nhat|` on local face `local_face` at triangle coordinates
    /// `ref_face_point` (in the face's local vertex order).
    pub fn surface_measure_factor(&self, local_face: usize, ref_face_pt: &Vector2<f64>) -> Result<f64> {
        let xi = ref_face_point(local_face, ref_face_pt);
        let jd = self.jacobian_at(&xi)?;
        Ok(jd.surface_factor(&ref_face_normal(local_face)))
    }
}

/// Builds the degree-`degree` map of element `e`. Lattice nodes on boundary
/// edges and faces lying on the curved part of the boundary are projected onto
/// it; all other nodes keep their straight positions.
pub fn build_curved_map(
    mesh: &StraightMesh,
    e: usize,
    degree: usize,
    boundary_edges: &HashSet<(usize, usize)>,
) -> Result<CurvedElementMap> {
    if !(1..=3).contains(&degree) {
        return Err(Error::UnsupportedDegree(degree));
    }
    let p = mesh.element_coords(e);
    let origin = p[0];
    let affine_jac = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    let affine_det = affine_jac.determinant();
    let affine_jac_inv = affine_jac.try_inverse().ok_or(Error::SingularMap {
        element: e,
        det: affine_det,
    })?;
    if !(affine_det > 0.0) {
        return Err(Error::SingularMap {
            element: e,
            det: affine_det,
        });
    }
    let basis = geometry_basis(degree);
    let ids = mesh.tets[e].vertex_ids;
    let curved_vertex = |l: usize| mesh.geometry.on_curved_surface(&mesh.vertices[ids[l]].coords);
    let edge_curved = |a: usize, b: usize| {
        let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
        boundary_edges.contains(&key) && curved_vertex(a) && curved_vertex(b)
    };
    let face_curved: Vec<bool> = (0..4)
        .map(|lf| mesh.face_is_curved(mesh.element_faces[e][lf]))
        .collect();
    let d = degree as f64;
    let mut moved = false;
    let node_coords: Vec<Vector3<f64>> = basis
        .lattice
        .iter()
        .map(|m| {
            let xi = Vector3::new(m[1] as f64 / d, m[2] as f64 / d, m[3] as f64 / d);
            let x = origin + affine_jac * xi;
            let support: Vec<usize> = (0..4).filter(|&l| m[l] > 0).collect();
            let on_curved = match support.len() {
                2 => edge_curved(support[0], support[1]),
                3 => {
                    let opposite = (0..4).find(|l| !support.contains(l)).unwrap();
                    face_curved[opposite]
                }
                _ => false,
            };
            if on_curved {
                moved = true;
                mesh.geometry.project(&x)
            } else {
                x
            }
        })
        .collect();
    let mut coord_coeffs: [Vec<f64>; 3] = Default::default();
    if moved {
        for (i, cc) in coord_coeffs.iter_mut().enumerate() {
            *cc = vec![0.0; basis.mons.len()];
            for (n, x) in node_coords.iter().enumerate() {
                for (c, b) in cc.iter_mut().zip(&basis.coeffs[n]) {
                    *c += x[i] * b;
                }
            }
        }
    }
    Ok(CurvedElementMap {
        element: e,
        degree,
        node_coords,
        is_affine: !moved,
        origin,
        affine_jac,
        affine_jac_inv,
        affine_det,
        coord_coeffs,
    })
}

/// Maps for every element, with `det J > 0` checked at the vertices and at the
/// points of a degree-(2k+2) volume rule.
pub fn build_curved_maps(mesh: &StraightMesh, degree: usize) -> Result<Vec<CurvedElementMap>> {
    let edges = mesh.boundary_edges();
    let rule = tet_quadrature(2 * degree + 2)?;
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let m = build_curved_map(mesh, e, degree, &edges)?;
            if !m.is_affine {
                for xi in rule.points.iter().copied().chain((0..4).map(ref_vertex)) {
                    m.jacobian_at(&xi)?;
                }
            }
            Ok(m)
        })
        .collect()
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BoundsReport {
    /// max `|J_{M_h} - I|_F`, where `J_{M_h}` is the curved Jacobian relative to
    /// the straight element.
    pub max_jacobian_deviation: f64,
    /// min/max of `det J_{M_h}` over sample points.
    pub min_relative_det: f64,
    pub max_relative_det: f64,
    /// max Frobenius norm of the second derivatives of `M_h`.
    pub max_second_derivative: f64,
    pub curved_elements: usize,
    pub nonpositive_det_elements: Vec<usize>,
}

pub fn verify_jacobian_bounds(maps: &[CurvedElementMap]) -> BoundsReport {
    let rule = tet_quadrature(2 * maps.first().map_or(1, |m| m.degree) + 2).expect("supported degree");
    let mut rep = BoundsReport {
        min_relative_det: f64::INFINITY,
        max_relative_det: 0.0,
        ..Default::default()
    };
    for m in maps {
        if !m.is_affine {
            rep.curved_elements += 1;
        }
        let mut bad = false;
        for xi in rule.points.iter().copied().chain((0..4).map(ref_vertex)) {
            match m.jacobian_at(&xi) {
                Ok(jd) => {
                    let rel = jd.jac * m.affine_jac_inv;
                    rep.max_jacobian_deviation = rep
                        .max_jacobian_deviation
                        .max((rel - Matrix3::identity()).norm());
                    let rdet = jd.det / m.affine_det;
                    rep.min_relative_det = rep.min_relative_det.min(rdet);
                    rep.max_relative_det = rep.max_relative_det.max(rdet);
                    let a = &m.affine_jac_inv;
                    let h2: f64 = jd
                        .second_derivatives
                        .iter()
                        .map(|h| (a.transpose() * h * a).norm_squared())
                        .sum();
                    rep.max_second_derivative = rep.max_second_derivative.max(h2.sqrt());
                }
                Err(_) => bad = true,
            }
        }
        if bad {
            rep.nonpositive_det_elements.push(m.element);
        }
    }
    rep
}

/// Largest distance from the curved boundary of points on curved boundary faces
/// of `Omega_h`, sampled at the points of a degree-`2k+2` triangle rule.
pub fn boundary_geometric_error(mesh: &StraightMesh, maps: &[CurvedElementMap]) -> f64 {
    let rule = tri_quadrature(2 * maps[0].degree + 2).expect("supported degree");
    let mut worst: f64 = 0.0;
    for (fid, f) in mesh.faces.iter().enumerate() {
        if !mesh.face_is_curved(fid) {
            continue;
        }
        let side = f.owner();
        let m = &maps[side.element];
        for p in &rule.points {
            let x = m.point(&ref_face_point(side.local_face, p));
            worst = worst.max(mesh.geometry.boundary_distance(&x));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ExactGeometry;
    use crate::mesh::generate_ball_mesh;

    fn scaled_tet(s: f64) -> StraightMesh {
        StraightMesh::from_raw(
            vec![
                Vector3::zeros(),
                Vector3::new(s, 0.0, 0.0),
                Vector3::new(0.0, s, 0.0),
                Vector3::new(0.0, 0.0, s),
            ],
            vec![[0, 1, 2, 3]],
            ExactGeometry::Identity,
        )
        .unwrap()
    }

    #[test]
    fn identity_and_scaling_maps() {
        let m = build_curved_maps(&scaled_tet(1.0), 2).unwrap();
        let jd = m[0].jacobian_at(&Vector3::new(0.1, 0.2, 0.3)).unwrap();
        assert!((jd.jac - Matrix3::identity()).norm() < 1e-15);
        assert_eq!(jd.det, 1.0);
        assert!(jd.second_derivatives.iter().all(|h| h.norm() == 0.0));
        let m2 = build_curved_maps(&scaled_tet(2.0), 1).unwrap();
        assert!((m2[0].jacobian_at(&Vector3::zeros()).unwrap().det - 8.0).abs() < 1e-14);
        for f in 0..4 {
            let one = m[0].surface_measure_factor(f, &Vector2::new(0.2, 0.3)).unwrap();
            let four = m2[0].surface_measure_factor(f, &Vector2::new(0.2, 0.3)).unwrap();
            assert!((one - 1.0).abs() < 1e-14);
            assert!((four - 4.0).abs() < 1e-13);
        }
    }

    #[test]
    fn degree_one_is_always_affine() {
        let mesh = generate_ball_mesh(1.0, 0).unwrap();
        let maps = build_curved_maps(&mesh, 1).unwrap();
        assert!(maps.iter().all(|m| m.is_affine));
        assert_eq!(verify_jacobian_bounds(&maps).max_jacobian_deviation, 0.0);
    }

    #[test]
    fn quadratic_boundary_midpoints_on_sphere() {
        let mesh = generate_ball_mesh(1.0, 1).unwrap();
        let edges = mesh.boundary_edges();
        let maps = build_curved_maps(&mesh, 2).unwrap();
        let mut checked = 0;
        for m in &maps {
            assert_eq!(m.node_coords.len(), 10);
            let ids = mesh.tets[m.element].vertex_ids;
            for (n, mi) in lattice(4, 2).iter().enumerate() {
                let sup: Vec<usize> = (0..4).filter(|&l| mi[l] > 0).collect();
                if sup.len() == 2 {
                    let key = (ids[sup[0]].min(ids[sup[1]]), ids[sup[0]].max(ids[sup[1]]));
                    if edges.contains(&key) {
                        assert!((m.node_coords[n].norm() - 1.0).abs() < 1e-12);
                        checked += 1;
                    }
                }
            }
            if mesh.tets[m.element].boundary_vertex_count <= 1 {
                assert!(m.is_affine);
            }
        }
        assert!(checked > 0);
    }
}
