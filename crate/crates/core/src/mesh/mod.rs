//! Straight, body-fitted tetrahedral meshes of the polyhedral reference domain.

mod generate;
mod io;
mod refine;
mod validate;

use std::collections::{HashMap, HashSet};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ExactGeometry;

pub use generate::{cavity_grid_for_target, cavity_mesh_on_grid, generate_ball_mesh, generate_cavity_mesh, generate_cube_mesh, CavityGrid};
pub use io::{load_mesh, parse_gmsh, parse_tetmesh, write_tetmesh, MeshFormat};
pub use refine::uniform_refine;
pub use validate::{validate_topology, TopologyIssue, TopologyReport, SHAPE_REGULARITY_FLOOR};

/// Local face `i` of a tetrahedron is opposite local vertex `i`; its vertices are
/// the remaining three in increasing local order.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub coords: Vector3<f64>,
    pub on_boundary: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tetrahedron {
    pub vertex_ids: [usize; 4],
    pub boundary_vertex_count: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceKind {
    Interior,
    Boundary,
}

/// One element adjacent to a face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceSide {
    pub element: usize,
    pub local_face: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    /// Vertex ids in increasing order (canonical face orientation).
    pub vertex_ids: [usize; 3],
    /// The first side is the orientation owner: its outward normal is the
    /// face's global normal.
    pub sides: Vec<FaceSide>,
    pub kind: FaceKind,
    pub diameter: f64,
}

impl FaceRecord {
    pub fn owner(&self) -> FaceSide {
        self.sides[0]
    }

    pub fn is_boundary(&self) -> bool {
        self.kind == FaceKind::Boundary
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StraightMesh {
    pub vertices: Vec<Vertex>,
    pub tets: Vec<Tetrahedron>,
    pub faces: Vec<FaceRecord>,
    /// Global face index of each local face, per element.
    pub element_faces: Vec<[usize; 4]>,
    pub mesh_size: f64,
    pub geometry: ExactGeometry,
}

impl StraightMesh {
    /// Builds face topology and boundary flags from raw connectivity. Inverted
    /// elements are rejected; non-manifold faces (shared by more than two
    /// elements) are a topology error.
    pub fn from_raw(
        coords: Vec<Vector3<f64>>,
        tets: Vec<[usize; 4]>,
        geometry: ExactGeometry,
    ) -> Result<Self> {
        for (e, t) in tets.iter().enumerate() {
            if t.iter().any(|&v| v >= coords.len()) {
                return Err(Error::Topology(format!("element {e} references a missing vertex")));
            }
            let vol = signed_volume(&[coords[t[0]], coords[t[1]], coords[t[2]], coords[t[3]]]);
            if vol <= 0.0 {
                return Err(Error::Topology(format!(
                    "element {e} is inverted or degenerate (signed volume {vol:.3e})"
                )));
            }
        }
        Self::build_unchecked(coords, tets, geometry)
    }

    pub(crate) fn build_unchecked(
        coords: Vec<Vector3<f64>>,
        tets: Vec<[usize; 4]>,
        geometry: ExactGeometry,
    ) -> Result<Self> {
        let mut face_index: HashMap<[usize; 3], usize> = HashMap::with_capacity(tets.len() * 2);
        let mut faces: Vec<FaceRecord> = Vec::with_capacity(tets.len() * 2 + 16);
        let mut element_faces = Vec::with_capacity(tets.len());
        for (e, t) in tets.iter().enumerate() {
            let mut ef = [0usize; 4];
            for (lf, lv) in LOCAL_FACES.iter().enumerate() {
                let mut key = [t[lv[0]], t[lv[1]], t[lv[2]]];
                key.sort_unstable();
                let side = FaceSide {
                    element: e,
                    local_face: lf,
                };
                let id = *face_index.entry(key).or_insert_with(|| {
                    faces.push(FaceRecord {
                        vertex_ids: key,
                        sides: Vec::with_capacity(2),
                        kind: FaceKind::Boundary,
                        diameter: 0.0,
                    });
                    faces.len() - 1
                });
                if faces[id].sides.len() == 2 {
                    return Err(Error::Topology(format!(
                        "face {key:?} is shared by more than two elements (element {e})"
                    )));
                }
                faces[id].sides.push(side);
                ef[lf] = id;
            }
            element_faces.push(ef);
        }
        let mut on_boundary = vec![false; coords.len()];
        for f in &mut faces {
            f.kind = if f.sides.len() == 2 {
                FaceKind::Interior
            } else {
                FaceKind::Boundary
            };
            if f.kind == FaceKind::Boundary {
                for &v in &f.vertex_ids {
                    on_boundary[v] = true;
                }
            }
            let p = f.vertex_ids.map(|v| coords[v]);
            f.diameter = (p[0] - p[1]).norm().max((p[0] - p[2]).norm()).max((p[1] - p[2]).norm());
        }
        let vertices: Vec<Vertex> = coords
            .into_iter()
            .zip(on_boundary.iter())
            .map(|(c, &b)| Vertex {
                coords: c,
                on_boundary: b,
            })
            .collect();
        let tets: Vec<Tetrahedron> = tets
            .into_iter()
            .map(|t| Tetrahedron {
                vertex_ids: t,
                boundary_vertex_count: t.iter().filter(|&&v| on_boundary[v]).count() as u8,
            })
            .collect();
        let mut mesh = Self {
            vertices,
            tets,
            faces,
            element_faces,
            mesh_size: 0.0,
            geometry,
        };
        mesh.mesh_size = (0..mesh.tets.len())
            .map(|e| mesh.element_diameter(e))
            .fold(0.0, f64::max);
        Ok(mesh)
    }

    pub fn num_elements(&self) -> usize {
        self.tets.len()
    }

    pub fn num_interior_faces(&self) -> usize {
        self.faces.iter().filter(|f| !f.is_boundary()).count()
    }

    pub fn num_boundary_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.is_boundary()).count()
    }

    pub fn element_coords(&self, e: usize) -> [Vector3<f64>; 4] {
        self.tets[e].vertex_ids.map(|v| self.vertices[v].coords)
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        let p = self.element_coords(e);
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                d = d.max((p[i] - p[j]).norm());
            }
        }
        d
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        signed_volume(&self.element_coords(e))
    }

    /// Inradius over diameter.
    pub fn shape_ratio(&self, e: usize) -> f64 {
        let p = self.element_coords(e);
        let vol = signed_volume(&p).abs();
        let area: f64 = LOCAL_FACES
            .iter()
            .map(|f| 0.5 * (p[f[1]] - p[f[0]]).cross(&(p[f[2]] - p[f[0]])).norm())
            .sum();
        let inradius = 3.0 * vol / area;
        inradius / self.element_diameter(e)
    }

    /// Undirected edges (sorted vertex pairs) lying on boundary faces.
    pub fn boundary_edges(&self) -> HashSet<(usize, usize)> {
        let mut set = HashSet::new();
        for f in self.faces.iter().filter(|f| f.is_boundary()) {
            let v = f.vertex_ids;
            set.insert((v[0], v[1]));
            set.insert((v[0], v[2]));
            set.insert((v[1], v[2]));
        }
        set
    }

    /// Whether the boundary face lies on the curved part of the exact boundary.
    pub fn face_is_curved(&self, face: usize) -> bool {
        let f = &self.faces[face];
        f.is_boundary()
            && f
                .vertex_ids
                .iter()
                .all(|&v| self.geometry.on_curved_surface(&self.vertices[v].coords))
    }

    /// Largest over smallest element diameter.
    pub fn quasi_uniformity(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for e in 0..self.tets.len() {
            let d = self.element_diameter(e);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        hi / lo
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|e| self.element_volume(e)).sum()
    }
}

pub fn signed_volume(p: &[Vector3<f64>; 4]) -> f64 {
    (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0]))) / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_tet() -> StraightMesh {
        StraightMesh::from_raw(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2, 3]],
            ExactGeometry::Identity,
        )
        .unwrap()
    }

    #[test]
    fn single_tet_topology() {
        let m = unit_tet();
        assert_eq!(m.num_elements(), 1);
        assert_eq!(m.num_boundary_faces(), 4);
        assert_eq!(m.num_interior_faces(), 0);
        assert_eq!(m.tets[0].boundary_vertex_count, 4);
    }

    #[test]
    fn two_tets_share_one_face() {
        let m = StraightMesh::from_raw(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(0.0, 0.0, 1.0),
                Vector3::new(1.0, 1.0, 1.0),
            ],
            vec![[0, 1, 2, 3], [1, 3, 2, 4]],
            ExactGeometry::Identity,
        );
        // second tet is inverted in this ordering
        assert!(m.is_err());
        let m = StraightMesh::from_raw(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(0.0, 0.0, 1.0),
                Vector3::new(1.0, 1.0, 1.0),
            ],
            vec![[0, 1, 2, 3], [1, 2, 3, 4]],
            ExactGeometry::Identity,
        )
        .unwrap();
        assert_eq!(m.num_interior_faces(), 1);
        assert_eq!(m.num_boundary_faces(), 6);
        assert_eq!(4 * m.num_elements(), 2 * m.num_interior_faces() + m.num_boundary_faces());
    }
}
