use std::collections::HashMap;

use nalgebra::Vector3;

use super::{signed_volume, StraightMesh, LOCAL_FACES};
use crate::error::{Error, Result};
use crate::geometry::ExactGeometry;
use crate::mesh::uniform_refine;

/// Body-fitted mesh of the ball `|x| < radius`.
///
/// The seed places the 26 boundary nodes of a 3x3x3 cube lattice on the sphere
/// and cones each of the 48 surface triangles to the center; `level` uniform
/// refinements follow, each multiplying the element count by 8.
pub fn generate_ball_mesh(radius: f64, level: usize) -> Result<StraightMesh> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
    }
    let mut coords = vec![Vector3::zeros()];
    let mut index = HashMap::new();
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for k in -1i32..=1 {
                if (i, j, k) == (0, 0, 0) {
                    continue;
                }
                let d = Vector3::new(i as f64, j as f64, k as f64);
                index.insert((i, j, k), coords.len());
                coords.push(d * (radius / d.norm()));
            }
        }
    }
    let mut tets = Vec::with_capacity(48);
    // each cube face is a 2x2 grid of squares, each cut along the diagonal
    // through the face center
    for axis in 0..3 {
        for side in [-1i32, 1] {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let node = |a: i32, b: i32| {
                let mut p = [0i32; 3];
                p[axis] = side;
                p[u] = a;
                p[v] = b;
                index[&(p[0], p[1], p[2])]
            };
            for a in [-1i32, 1] {
                for b in [-1i32, 1] {
                    let c = node(0, 0);
                    let corner = node(a, b);
                    tets.push([0, c, node(a, 0), corner]);
                    tets.push([0, c, corner, node(0, b)]);
                }
            }
        }
    }
    orient(&coords, &mut tets);
    let mut mesh = StraightMesh::from_raw(coords, tets, ExactGeometry::sphere(Vector3::zeros(), radius))?;
    for _ in 0..level {
        mesh = uniform_refine(&mesh);
    }
    Ok(mesh)
}

/// Structured layout of a cavity mesh: an `outer`^3 lattice of cubes on the hollow
/// cube `[-1,1]^3 \ [-s,s]^3` with `s = inner / outer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CavityGrid {
    pub outer: usize,
    pub inner: usize,
}

impl CavityGrid {
    pub fn tet_count(&self) -> usize {
        6 * (self.outer.pow(3) - self.inner.pow(3))
    }
}

/// Chooses the grid whose tetrahedron count is closest to `target`.
///
/// Admissible lattices have at least as many cells across each sphere patch as
/// radial layers; thinner shells leave the curved elements next to the sphere too
/// flat for the default penalty.
pub fn cavity_grid_for_target(target: usize) -> Result<CavityGrid> {
    let mut best: Option<CavityGrid> = None;
    for outer in (6..=64).step_by(2) {
        for inner in (2..outer).step_by(2) {
            let s = inner as f64 / outer as f64;
            let layers = (outer - inner) / 2;
            if layers < 2 || layers > inner || !(0.25..=0.45).contains(&s) {
                continue;
            }
            let g = CavityGrid { outer, inner };
            let better = match best {
                None => true,
                Some(b) => g.tet_count().abs_diff(target) < b.tet_count().abs_diff(target),
            };
            if better {
                best = Some(g);
            }
        }
    }
    let best = best.expect("grid search space is nonempty");
    let smallest = CavityGrid { outer: 6, inner: 2 }.tet_count();
    if target < smallest / 2 {
        return Err(Error::InfeasibleTarget(target));
    }
    Ok(best)
}

/// Body-fitted mesh of `(0,1)^3` minus the closed ball `B(center, radius)`.
///
/// A hollow-cube lattice is mapped by radial blending: the inner cube surface goes
/// to the sphere and the outer cube surface to the unit cube. Each lattice cube is
/// split into six tetrahedra along the diagonal pointing away from the center, so
/// no element carries four boundary vertices.
pub fn generate_cavity_mesh(
    ball_center: Vector3<f64>,
    ball_radius: f64,
    target_tets: usize,
) -> Result<StraightMesh> {
    let half = ball_center
        .iter()
        .map(|c| c.min(1.0 - c))
        .fold(f64::INFINITY, f64::min);
    if !(ball_radius > 0.0) || ball_radius >= half {
        return Err(Error::Config("ball must lie strictly inside the unit cube".into()));
    }
    cavity_mesh_on_grid(ball_center, ball_radius, cavity_grid_for_target(target_tets)?)
}

/// Cavity mesh on an explicit lattice layout; see [`generate_cavity_mesh`].
pub fn cavity_mesh_on_grid(ball_center: Vector3<f64>, ball_radius: f64, grid: CavityGrid) -> Result<StraightMesh> {
    let half = ball_center
        .iter()
        .map(|c| c.min(1.0 - c))
        .fold(f64::INFINITY, f64::min);
    if !(ball_radius > 0.0) || ball_radius >= half {
        return Err(Error::Config("ball must lie strictly inside the unit cube".into()));
    }
    let n = grid.outer as i64;
    let m = grid.inner as i64;
    let s = m as f64 / n as f64;
    let lattice = |i: i64| -1.0 + 2.0 * i as f64 / n as f64;
    let inside_hole = |i: i64| i > (n - m) / 2 && i < (n + m) / 2;
    let mut index = HashMap::new();
    let mut coords = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                if inside_hole(i) && inside_hole(j) && inside_hole(k) {
                    continue;
                }
                let p = Vector3::new(lattice(i), lattice(j), lattice(k));
                let rho = p.amax();
                let dir = p / rho;
                // geometric spacing along the ray keeps the layers next to the sphere
                // about as thick as they are wide
                let t = (rho / s).ln() / (1.0 / s).ln();
                // map the cube [-1,1]^3 onto the physical unit cube around the center
                let on_cube = Vector3::new(
                    cube_target(dir.x, ball_center.x),
                    cube_target(dir.y, ball_center.y),
                    cube_target(dir.z, ball_center.z),
                );
                let on_sphere = ball_center + dir * (ball_radius / dir.norm());
                let (r0, r1) = ((on_sphere - ball_center).norm(), (on_cube - ball_center).norm());
                let w = (r0 * (r1 / r0).powf(t) - r0) / (r1 - r0);
                let mut x = on_sphere * (1.0 - w) + on_cube * w;
                if (rho - s).abs() < 1e-14 {
                    x = on_sphere;
                }
                if (rho - 1.0).abs() < 1e-14 {
                    x = on_cube;
                }
                index.insert((i, j, k), coords.len());
                coords.push(x);
            }
        }
    }
    let mut tets = Vec::with_capacity(grid.tet_count());
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let hole = |a: i64| a >= (n - m) / 2 && a < (n + m) / 2;
                if hole(i) && hole(j) && hole(k) {
                    continue;
                }
                // mirror so that local (0,0,0) is the corner nearest the center
                let flip = [i < n / 2, j < n / 2, k < n / 2];
                let corner = |a: i64, b: i64, c: i64| {
                    let ii = if flip[0] { i + 1 - a } else { i + a };
                    let jj = if flip[1] { j + 1 - b } else { j + b };
                    let kk = if flip[2] { k + 1 - c } else { k + c };
                    index[&(ii, jj, kk)]
                };
                for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                    let mut step = [0i64; 3];
                    let mut ids = [corner(0, 0, 0); 4];
                    for (q, &axis) in perm.iter().enumerate() {
                        step[axis] = 1;
                        ids[q + 1] = corner(step[0], step[1], step[2]);
                    }
                    tets.push(ids);
                }
            }
        }
    }
    orient(&coords, &mut tets);
    let geometry = ExactGeometry::cube_minus_sphere(ball_center, ball_radius);
    let mesh = StraightMesh::from_raw(coords, tets, geometry)?;
    split_overfull_boundary_tets(mesh)
}

/// Straight mesh of the unit cube `(0,1)^3`: an `n`^3 lattice of cubes, each split
/// into six tetrahedra around the main diagonal.
pub fn generate_cube_mesh(n: usize) -> Result<StraightMesh> {
    if n == 0 {
        return Err(Error::Config("cube mesh needs at least one cell per side".into()));
    }
    let id = |i: usize, j: usize, k: usize| (i * (n + 1) + j) * (n + 1) + k;
    let mut coords = Vec::with_capacity((n + 1).pow(3));
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                coords.push(Vector3::new(i as f64, j as f64, k as f64) / n as f64);
            }
        }
    }
    let mut tets = Vec::with_capacity(6 * n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                    let mut step = [0usize; 3];
                    let mut ids = [id(i, j, k); 4];
                    for (q, &axis) in perm.iter().enumerate() {
                        step[axis] = 1;
                        ids[q + 1] = id(i + step[0], j + step[1], k + step[2]);
                    }
                    tets.push(ids);
                }
            }
        }
    }
    orient(&coords, &mut tets);
    StraightMesh::from_raw(coords, tets, ExactGeometry::Identity)
}

fn cube_target(d: f64, c: f64) -> f64 {
    // d in [-1,1] maps linearly onto [0, c] for d <= 0 and [c, 1] for d >= 0
    if d <= 0.0 {
        c + d * c
    } else {
        c + d * (1.0 - c)
    }
}

fn orient(coords: &[Vector3<f64>], tets: &mut [[usize; 4]]) {
    for t in tets.iter_mut() {
        let vol = signed_volume(&t.map(|v| coords[v]));
        if vol < 0.0 {
            t.swap(2, 3);
        }
    }
}

/// Replaces every element with four boundary vertices by four elements coned
/// from its centroid, so each element has at most three vertices on the boundary.
pub(crate) fn split_overfull_boundary_tets(mesh: StraightMesh) -> Result<StraightMesh> {
    if mesh.tets.iter().all(|t| t.boundary_vertex_count <= 3) {
        return Ok(mesh);
    }
    let mut coords: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| v.coords).collect();
    let mut tets = Vec::with_capacity(mesh.tets.len() + 8);
    for t in &mesh.tets {
        if t.boundary_vertex_count <= 3 {
            tets.push(t.vertex_ids);
            continue;
        }
        let c = t.vertex_ids.iter().map(|&v| coords[v]).sum::<Vector3<f64>>() / 4.0;
        let ci = coords.len();
        coords.push(c);
        for (opp, f) in LOCAL_FACES.iter().enumerate() {
            // replace the vertex opposite the face by the centroid
            let mut ids = t.vertex_ids;
            ids[opp] = ci;
            debug_assert!(f.iter().all(|&l| l != opp));
            tets.push(ids);
        }
    }
    orient(&coords, &mut tets);
    StraightMesh::from_raw(coords, tets, mesh.geometry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate_topology;

    #[test]
    fn cube_mesh_counts() {
        let m = generate_cube_mesh(2).unwrap();
        assert_eq!(m.num_elements(), 48);
        assert!((m.total_volume() - 1.0).abs() < 1e-14);
        assert_eq!(m.num_boundary_faces(), 6 * 2 * 2 * 2);
        assert!(validate_topology(&m).is_clean());
    }

    #[test]
    fn ball_seed_counts() {
        let m = generate_ball_mesh(1.0, 0).unwrap();
        assert_eq!(m.num_elements(), 48);
        assert_eq!(m.num_boundary_faces(), 48);
        assert_eq!(m.num_interior_faces(), 72);
        assert_eq!(m.vertices.len(), 27);
        assert!(validate_topology(&m).is_clean());
        for v in m.vertices.iter().filter(|v| v.on_boundary) {
            assert!((v.coords.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cavity_grid_choice() {
        assert_eq!(cavity_grid_for_target(27_889).unwrap(), CavityGrid { outer: 18, inner: 8 });
        assert_eq!(cavity_grid_for_target(3_880).unwrap(), CavityGrid { outer: 10, inner: 4 });
        assert_eq!(cavity_grid_for_target(1_248).unwrap(), CavityGrid { outer: 6, inner: 2 });
        assert!(cavity_grid_for_target(100).is_err());
    }

    #[test]
    fn coarse_cavity_is_valid_and_body_fitted() {
        let c = Vector3::repeat(0.5);
        let m = generate_cavity_mesh(c, 0.25, 3_880).unwrap();
        let report = validate_topology(&m);
        assert!(report.is_clean(), "{report:?}");
        for v in m.vertices.iter().filter(|v| v.on_boundary) {
            let on_sphere = ((v.coords - c).norm() - 0.25).abs() < 1e-12;
            let on_cube = v.coords.iter().any(|t| t.abs() < 1e-14 || (t - 1.0).abs() < 1e-14);
            assert!(on_sphere || on_cube, "{:?}", v.coords);
        }
        let vol = 1.0 - 4.0 / 3.0 * std::f64::consts::PI * 0.25f64.powi(3);
        assert!((m.total_volume() - vol).abs() < 0.02);
    }

    #[test]
    fn overfull_elements_are_split() {
        let raw = StraightMesh::from_raw(
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
        let m = split_overfull_boundary_tets(raw).unwrap();
        assert_eq!(m.num_elements(), 4);
        assert!(m.tets.iter().all(|t| t.boundary_vertex_count == 3));
        assert!((m.total_volume() - 1.0 / 6.0).abs() < 1e-15);
    }
}
