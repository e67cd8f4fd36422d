use serde::Serialize;

use super::StraightMesh;
use crate::geometry::ExactGeometry;

/// Meshes with an element whose inradius/diameter falls below this are rejected.
pub const SHAPE_REGULARITY_FLOOR: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum TopologyIssue {
    Inverted { element: usize, volume: f64 },
    TooManyBoundaryVertices { element: usize, count: u8 },
    PoorShape { element: usize, ratio: f64 },
    NonConforming { face: usize, sides: usize },
    FaceCountMismatch { elements: usize, interior: usize, boundary: usize },
    OffBoundary { vertex: usize, distance: f64 },
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TopologyReport {
    pub issues: Vec<TopologyIssue>,
}

impl TopologyReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

pub fn validate_topology(mesh: &StraightMesh) -> TopologyReport {
    let mut issues = Vec::new();
    for (e, t) in mesh.tets.iter().enumerate() {
        let vol = mesh.element_volume(e);
        if !(vol > 0.0) {
            issues.push(TopologyIssue::Inverted { element: e, volume: vol });
        }
        // only curved geometries need the rule: the geometry map deviates from
        // the straight element based on these vertices
        if t.boundary_vertex_count > 3 && mesh.geometry != ExactGeometry::Identity {
            issues.push(TopologyIssue::TooManyBoundaryVertices {
                element: e,
                count: t.boundary_vertex_count,
            });
        }
        let ratio = mesh.shape_ratio(e);
        if !(ratio >= SHAPE_REGULARITY_FLOOR) {
            issues.push(TopologyIssue::PoorShape { element: e, ratio });
        }
    }
    for (f, rec) in mesh.faces.iter().enumerate() {
        if rec.sides.is_empty() || rec.sides.len() > 2 {
            issues.push(TopologyIssue::NonConforming {
                face: f,
                sides: rec.sides.len(),
            });
        }
    }
    let interior = mesh.num_interior_faces();
    let boundary = mesh.num_boundary_faces();
    if 4 * mesh.num_elements() != 2 * interior + boundary {
        issues.push(TopologyIssue::FaceCountMismatch {
            elements: mesh.num_elements(),
            interior,
            boundary,
        });
    }
    for (i, v) in mesh.vertices.iter().enumerate() {
        if v.on_boundary {
            let d = mesh.geometry.boundary_distance(&v.coords);
            if d > 1e-12 {
                issues.push(TopologyIssue::OffBoundary { vertex: i, distance: d });
            }
        }
    }
    TopologyReport { issues }
}
