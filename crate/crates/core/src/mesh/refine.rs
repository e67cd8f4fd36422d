use std::collections::HashMap;

use nalgebra::Vector3;

use super::StraightMesh;
use crate::geometry::ExactGeometry;

/// Red (1:8) refinement. Midpoints of boundary edges are moved onto the exact
/// boundary: projected onto the sphere when the edge lies on it, snapped to the
/// face planes otherwise.
pub fn uniform_refine(mesh: &StraightMesh) -> StraightMesh {
    let boundary_edges = mesh.boundary_edges();
    let geometry = mesh.geometry;
    let mut coords: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| v.coords).collect();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, coords: &mut Vec<Vector3<f64>>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&id) = midpoint.get(&key) {
            return id;
        }
        let (pa, pb) = (coords[a], coords[b]);
        let mut x = (pa + pb) * 0.5;
        if boundary_edges.contains(&key) {
            x = place_on_boundary(&geometry, &pa, &pb, &x);
        }
        coords.push(x);
        midpoint.insert(key, coords.len() - 1);
        coords.len() - 1
    };
    let mut tets = Vec::with_capacity(mesh.tets.len() * 8);
    for t in &mesh.tets {
        let v = t.vertex_ids;
        let mut m = [[usize::MAX; 4]; 4];
        for i in 0..4 {
            for j in i + 1..4 {
                let id = mid(v[i], v[j], &mut coords);
                m[i][j] = id;
                m[j][i] = id;
            }
        }
        tets.push([v[0], m[0][1], m[0][2], m[0][3]]);
        tets.push([m[0][1], v[1], m[1][2], m[1][3]]);
        tets.push([m[0][2], m[1][2], v[2], m[2][3]]);
        tets.push([m[0][3], m[1][3], m[2][3], v[3]]);
        // interior octahedron cut along its shortest diagonal
        let diagonals = [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)];
        let (a, b, c, d) = *diagonals
            .iter()
            .min_by(|x, y| {
                let lx = (coords[m[x.0][x.1]] - coords[m[x.2][x.3]]).norm();
                let ly = (coords[m[y.0][y.1]] - coords[m[y.2][y.3]]).norm();
                lx.total_cmp(&ly)
            })
            .unwrap();
        let (p, q) = (m[a][b], m[c][d]);
        let ring = [m[a][c], m[c][b], m[b][d], m[d][a]];
        for r in 0..4 {
            tets.push([p, q, ring[r], ring[(r + 1) % 4]]);
        }
    }
    for t in tets.iter_mut() {
        let vol = super::signed_volume(&t.map(|i| coords[i]));
        if vol < 0.0 {
            t.swap(2, 3);
        }
    }
    StraightMesh::from_raw(coords, tets, geometry).expect("red refinement preserves validity")
}

fn place_on_boundary(
    geometry: &ExactGeometry,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    x: &Vector3<f64>,
) -> Vector3<f64> {
    if geometry.on_curved_surface(a) && geometry.on_curved_surface(b) {
        geometry.project(x)
    } else {
        geometry.snap_flat(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_ball_mesh, validate_topology};

    #[test]
    fn single_tet_splits_into_eight() {
        let m = StraightMesh::from_raw(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2, 3]],
            ExactGeometry::Identity,
        )
        .unwrap();
        let r = uniform_refine(&m);
        assert_eq!(r.num_elements(), 8);
        assert!((r.total_volume() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.num_boundary_faces(), 16);
        assert_eq!(4 * 8, 2 * r.num_interior_faces() + r.num_boundary_faces());
    }

    #[test]
    fn ball_refinement_stays_on_sphere_and_halves_h() {
        let mut m = generate_ball_mesh(1.0, 0).unwrap();
        let mut ratio = m.quasi_uniformity();
        for level in 0..3 {
            let r = uniform_refine(&m);
            assert_eq!(r.num_elements(), 8 * m.num_elements());
            for v in r.vertices.iter().filter(|v| v.on_boundary) {
                assert!((v.coords.norm() - 1.0).abs() < 1e-12);
            }
            // the seed's cone elements split into octahedra whose diagonals exceed
            // half the radial edge; later levels halve h
            let shrink = r.mesh_size / m.mesh_size;
            if level == 0 {
                assert!(shrink < 0.65, "h ratio {shrink}");
            } else {
                assert!((shrink - 0.5).abs() <= 0.05, "h ratio {shrink}");
                assert!(r.quasi_uniformity() <= 1.1 * ratio);
            }
            assert!(validate_topology(&r).is_clean());
            ratio = r.quasi_uniformity();
            m = r;
        }
    }
}
