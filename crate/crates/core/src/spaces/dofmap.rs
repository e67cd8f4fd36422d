use std::collections::HashMap;

use serde::Serialize;

use crate::mesh::{StraightMesh, LOCAL_FACES};
use crate::poly::lattice;

/// Global numbering of the BDM velocity and discontinuous pressure unknowns.
///
/// Face DOFs are numbered `face * dofs_per_face + node`, where `node` indexes the
/// face lattice in the canonical (sorted global vertex id) order; interior DOFs
/// follow all face DOFs. A local face DOF carries sign `+1` on the face's
/// orientation owner and `-1` on the other side.
#[derive(Clone, Debug, Serialize)]
pub struct DofMap {
    pub degree: usize,
    pub dofs_per_face: usize,
    pub interior_per_element: usize,
    pub local_velocity: usize,
    pub local_pressure: usize,
    pub n_velocity: usize,
    pub n_pressure: usize,
    velocity: Vec<usize>,
    signs: Vec<f64>,
    /// Face-moment DOFs on boundary faces, sorted.
    pub boundary_normal_dofs: Vec<usize>,
}

impl DofMap {
    pub fn velocity_dofs(&self, e: usize) -> &[usize] {
        &self.velocity[e * self.local_velocity..(e + 1) * self.local_velocity]
    }

    pub fn velocity_signs(&self, e: usize) -> &[f64] {
        &self.signs[e * self.local_velocity..(e + 1) * self.local_velocity]
    }

    pub fn pressure_dofs(&self, e: usize) -> std::ops::Range<usize> {
        e * self.local_pressure..(e + 1) * self.local_pressure
    }

    /// Signed local coefficients of element `e` from a global velocity vector.
    pub fn local_velocity_coefficients(&self, e: usize, global: &[f64]) -> Vec<f64> {
        self.velocity_dofs(e)
            .iter()
            .zip(self.velocity_signs(e))
            .map(|(&g, s)| s * global[g])
            .collect()
    }

    /// Global DOFs of face `face`.
    pub fn face_dofs(&self, face: usize) -> std::ops::Range<usize> {
        face * self.dofs_per_face..(face + 1) * self.dofs_per_face
    }

    pub fn num_elements(&self) -> usize {
        self.velocity.len() / self.local_velocity
    }
}

pub fn build_dof_map(mesh: &StraightMesh, degree: usize) -> DofMap {
    let face_lattice = lattice(3, degree);
    let index: HashMap<&[usize], usize> = face_lattice.iter().enumerate().map(|(i, m)| (m.as_slice(), i)).collect();
    let nf = face_lattice.len();
    let ni = if degree >= 2 {
        3 * (degree + 1) * (degree + 2) * (degree + 3) / 6 - 4 * nf
    } else {
        0
    };
    let n_loc = 4 * nf + ni;
    let n_face_dofs = mesh.faces.len() * nf;
    let mut velocity = Vec::with_capacity(mesh.num_elements() * n_loc);
    let mut signs = Vec::with_capacity(mesh.num_elements() * n_loc);
    for (e, t) in mesh.tets.iter().enumerate() {
        for lf in 0..4 {
            let fid = mesh.element_faces[e][lf];
            let face = &mesh.faces[fid];
            let owner = face.owner();
            let sign = if owner.element == e && owner.local_face == lf { 1.0 } else { -1.0 };
            let rank: Vec<usize> = LOCAL_FACES[lf]
                .iter()
                .map(|&l| face.vertex_ids.iter().position(|&g| g == t.vertex_ids[l]).expect("face vertex"))
                .collect();
            for m in &face_lattice {
                let mut canon = vec![0; 3];
                for i in 0..3 {
                    canon[rank[i]] = m[i];
                }
                velocity.push(fid * nf + index[canon.as_slice()]);
                signs.push(sign);
            }
        }
        for i in 0..ni {
            velocity.push(n_face_dofs + e * ni + i);
            signs.push(1.0);
        }
    }
    let boundary_normal_dofs = mesh
        .faces
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_boundary())
        .flat_map(|(fid, _)| fid * nf..(fid + 1) * nf)
        .collect();
    let local_pressure = degree * (degree + 1) * (degree + 2) / 6;
    DofMap {
        degree,
        dofs_per_face: nf,
        interior_per_element: ni,
        local_velocity: n_loc,
        local_pressure,
        n_velocity: n_face_dofs + mesh.num_elements() * ni,
        n_pressure: mesh.num_elements() * local_pressure,
        velocity,
        signs,
        boundary_normal_dofs,
    }
}
