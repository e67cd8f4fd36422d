//! Exact boundary geometry, degree-k Lagrange element maps, Jacobian data and
//! quadrature on the reference cells.

mod exact;
mod map;
pub mod quadrature;

pub use exact::{ExactGeometry, ON_SURFACE_TOL};
pub use map::{
    boundary_geometric_error, build_curved_map, build_curved_maps, verify_jacobian_bounds, BoundsReport,
    CurvedElementMap, JacobianData,
};
pub use quadrature::{tet_quadrature, tri_quadrature, QuadratureRule, TetRule, TriRule};

use nalgebra::{Vector2, Vector3};

use crate::mesh::LOCAL_FACES;

/// Vertices of the unit reference tetrahedron.
pub const REF_VERTICES: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn ref_vertex(i: usize) -> Vector3<f64> {
    Vector3::from(REF_VERTICES[i])
}

/// Unit outward normal of local face `f` of the reference tetrahedron.
pub fn ref_face_normal(f: usize) -> Vector3<f64> {
    match f {
        0 => Vector3::repeat(1.0 / 3f64.sqrt()),
        1 => Vector3::new(-1.0, 0.0, 0.0),
        2 => Vector3::new(0.0, -1.0, 0.0),
        3 => Vector3::new(0.0, 0.0, -1.0),
        _ => panic!("local face index {f} out of range"),
    }
}

/// Area of local face `f` of the reference tetrahedron relative to the unit
/// triangle parametrization (twice its area).
pub fn ref_face_jacobian(f: usize) -> f64 {
    let [a, b, c] = LOCAL_FACES[f].map(ref_vertex);
    (b - a).cross(&(c - a)).norm()
}

/// Reference point of local face `f` at triangle coordinates `(s, t)` in the
/// local vertex order of the face.
pub fn ref_face_point(f: usize, st: &Vector2<f64>) -> Vector3<f64> {
    let [a, b, c] = LOCAL_FACES[f].map(ref_vertex);
    a + (b - a) * st.x + (c - a) * st.y
}

/// Reference point on a face given barycentric weights of three local vertices.
pub fn ref_point_from_barycentric(local_vertices: [usize; 3], bary: [f64; 3]) -> Vector3<f64> {
    (0..3).fold(Vector3::zeros(), |acc, i| acc + ref_vertex(local_vertices[i]) * bary[i])
}

/// Reference coordinates, inside element `side` of face `face`, of the point with
/// triangle coordinates `st` in the orientation owner's local face parametrization.
pub fn face_ref_point(mesh: &crate::mesh::StraightMesh, face: usize, side: usize, st: &Vector2<f64>) -> Vector3<f64> {
    let rec = &mesh.faces[face];
    let owner = rec.sides[0];
    if side == 0 {
        return ref_face_point(owner.local_face, st);
    }
    let other = rec.sides[side];
    let bary = [1.0 - st.x - st.y, st.x, st.y];
    let owner_ids = mesh.tets[owner.element].vertex_ids;
    let other_ids = mesh.tets[other.element].vertex_ids;
    let local = LOCAL_FACES[owner.local_face].map(|l| {
        other_ids
            .iter()
            .position(|&g| g == owner_ids[l])
            .expect("shared face vertex")
    });
    ref_point_from_barycentric(local, bary)
}
