//! Assembly of the interior-penalty saddle-point system, right-hand sides,
//! boundary-data lifts, the energy-norm Gram matrix and the lifting operator.

mod lifting;

pub use lifting::{a_dg_via_lifting, lifting_apply, LiftedField, LiftingWorkspace};

use std::collections::HashSet;

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{face_ref_point, ref_face_normal, tet_quadrature, tri_quadrature, CurvedElementMap, TetRule};
use crate::mesh::{StraightMesh, LOCAL_FACES};
use crate::spaces::{push_forward, FeSpace, NormalTraceConstraint, PhysicalShapes, ShapeValues, VectorField};
use crate::sparse::CsrMatrix;

/// Exactness degrees of the volume and face rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub volume_degree: usize,
    pub face_degree: usize,
}

impl QuadratureConfig {
    /// `2k + 2` for both volume and face terms.
    pub fn for_degree(k: usize) -> Self {
        Self {
            volume_degree: 2 * k + 2,
            face_degree: 2 * k + 2,
        }
    }
}

/// How the source term is sampled on curved elements.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsMode {
    /// `f` at the physical quadrature point `M_h(xhat)`.
    #[default]
    Direct,
    /// `f` at the image of `xhat` under a boundary-fitted blend of `M_h` that
    /// maps curved faces exactly onto the boundary.
    Pullback,
}

impl std::str::FromStr for RhsMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "pullback" => Ok(Self::Pullback),
            _ => Err(Error::Config(format!("unknown rhs mode '{s}' (expected direct or pullback)"))),
        }
    }
}

/// One point of a face rule, seen from both adjacent elements.
#[derive(Clone, Debug)]
pub struct FaceQuadPoint {
    pub x: Vector3<f64>,
    /// Quadrature weight times the physical surface measure factor.
    pub weight: f64,
    /// Outward unit normal of the orientation owner.
    pub normal: Vector3<f64>,
    /// Reference coordinates in each adjacent element.
    pub xi: [Vector3<f64>; 2],
}

#[derive(Clone, Debug)]
pub struct FaceQuadratureCache {
    pub points: Vec<Vec<FaceQuadPoint>>,
    /// Face diameter `h_F`.
    pub h: Vec<f64>,
    /// Largest `|n_owner + n_other|` over interior face points.
    pub max_normal_mismatch: f64,
}

impl FaceQuadratureCache {
    pub fn new(mesh: &StraightMesh, maps: &[CurvedElementMap], degree: usize) -> Result<Self> {
        let rule = tri_quadrature(degree)?;
        let per: Vec<(Vec<FaceQuadPoint>, f64)> = (0..mesh.faces.len())
            .into_par_iter()
            .map(|fid| -> Result<_> {
                let f = &mesh.faces[fid];
                let owner = f.sides[0];
                let nref = ref_face_normal(owner.local_face);
                let mut pts = Vec::with_capacity(rule.len());
                let mut mismatch: f64 = 0.0;
                for (st, w) in rule.iter() {
                    let xi0 = face_ref_point(mesh, fid, 0, st);
                    let jd = maps[owner.element].jacobian_at(&xi0)?;
                    let normal = jd.physical_normal(&nref);
                    let mut xi = [xi0, xi0];
                    if f.sides.len() == 2 {
                        xi[1] = face_ref_point(mesh, fid, 1, st);
                        let other = f.sides[1];
                        let jo = maps[other.element].jacobian_at(&xi[1])?;
                        let no = jo.physical_normal(&ref_face_normal(other.local_face));
                        mismatch = mismatch.max((normal + no).norm());
                    }
                    pts.push(FaceQuadPoint {
                        x: jd.point,
                        weight: w * jd.surface_factor(&nref) * crate::geometry::ref_face_jacobian(owner.local_face),
                        normal,
                        xi,
                    });
                }
                Ok((pts, mismatch))
            })
            .collect::<Result<_>>()?;
        let mut points = Vec::with_capacity(per.len());
        let mut max_normal_mismatch: f64 = 0.0;
        for (p, m) in per {
            points.push(p);
            max_normal_mismatch = max_normal_mismatch.max(m);
        }
        Ok(Self {
            points,
            h: mesh.faces.iter().map(|f| f.diameter).collect(),
            max_normal_mismatch,
        })
    }
}

/// Everything the assembly routines need about one discretization.
pub struct Discretization<'a> {
    pub mesh: &'a StraightMesh,
    pub maps: &'a [CurvedElementMap],
    pub space: &'a FeSpace,
    pub quadrature: QuadratureConfig,
    volume_rule: TetRule,
    volume_tables: Vec<ShapeValues>,
    pub faces: FaceQuadratureCache,
}

impl<'a> Discretization<'a> {
    pub fn new(
        mesh: &'a StraightMesh,
        maps: &'a [CurvedElementMap],
        space: &'a FeSpace,
        quadrature: QuadratureConfig,
    ) -> Result<Self> {
        if maps.len() != mesh.num_elements() {
            return Err(Error::Config("one geometry map per element is required".into()));
        }
        let volume_rule = tet_quadrature(quadrature.volume_degree)?;
        let volume_tables = volume_rule.points.iter().map(|p| space.bdm.tabulate(p)).collect();
        let faces = FaceQuadratureCache::new(mesh, maps, quadrature.face_degree)?;
        Ok(Self {
            mesh,
            maps,
            space,
            quadrature,
            volume_rule,
            volume_tables,
            faces,
        })
    }

    pub fn volume_rule(&self) -> &TetRule {
        &self.volume_rule
    }

    /// Physical shape data of element `e` at every volume quadrature point, with
    /// the quadrature weight times `J_d`.
    pub fn element_points(&self, e: usize) -> Result<Vec<(f64, PhysicalShapes)>> {
        let map = &self.maps[e];
        self.volume_rule
            .iter()
            .zip(&self.volume_tables)
            .map(|((p, w), tab)| {
                let jd = map.jacobian_at(p)?;
                Ok((w * jd.det, push_forward(jd, tab)))
            })
            .collect()
    }

    /// Physical shape data of element `side` of face `fid` at a face point.
    pub fn face_shapes(&self, fid: usize, side: usize, q: &FaceQuadPoint) -> Result<PhysicalShapes> {
        let e = self.mesh.faces[fid].sides[side].element;
        let jd = self.maps[e].jacobian_at(&q.xi[side])?;
        Ok(push_forward(jd, &self.space.bdm.tabulate(&q.xi[side])))
    }

    fn velocity_pattern(&self) -> Vec<Vec<usize>> {
        let dm = &self.space.dofs;
        let mut rows = vec![Vec::new(); dm.n_velocity];
        for f in &self.mesh.faces {
            let mut all: Vec<usize> = Vec::new();
            for s in &f.sides {
                all.extend_from_slice(dm.velocity_dofs(s.element));
            }
            for &r in &all {
                rows[r].extend_from_slice(&all);
            }
        }
        rows
    }
}

/// Adds `sign_i sign_j local[(i, j)]` at the global positions.
fn scatter(target: &mut CsrMatrix, rows: &[usize], rsign: &[f64], cols: &[usize], csign: &[f64], local: &DMatrix<f64>) {
    for (i, (&r, &sr)) in rows.iter().zip(rsign).enumerate() {
        for (j, (&c, &sc)) in cols.iter().zip(csign).enumerate() {
            let v = local[(i, j)];
            if v != 0.0 {
                target.add(r, c, sr * sc * v);
            }
        }
    }
}

const CHUNK: usize = 2048;

/// Which parts of the interior-penalty form to assemble.
#[derive(Clone, Copy, Debug)]
struct FormTerms {
    penalty: f64,
    consistency: bool,
}

fn assemble_dg_form(disc: &Discretization, terms: FormTerms) -> Result<CsrMatrix> {
    let dm = &disc.space.dofs;
    let n = dm.local_velocity;
    let mut a = CsrMatrix::from_pattern(dm.n_velocity, dm.n_velocity, disc.velocity_pattern());
    let ne = disc.mesh.num_elements();
    for start in (0..ne).step_by(CHUNK) {
        let locals: Vec<DMatrix<f64>> = (start..(start + CHUNK).min(ne))
            .into_par_iter()
            .map(|e| -> Result<_> {
                let mut k = DMatrix::zeros(n, n);
                for (w, ps) in disc.element_points(e)? {
                    for i in 0..n {
                        for j in i..n {
                            let v = w * ps.grads[i].dot(&ps.grads[j]);
                            k[(i, j)] += v;
                            if i != j {
                                k[(j, i)] += v;
                            }
                        }
                    }
                }
                Ok(k)
            })
            .collect::<Result<_>>()?;
        for (off, k) in locals.iter().enumerate() {
            let e = start + off;
            let (d, s) = (dm.velocity_dofs(e), dm.velocity_signs(e));
            scatter(&mut a, d, s, d, s, k);
        }
    }
    let nf = disc.mesh.faces.len();
    for start in (0..nf).step_by(CHUNK) {
        let locals: Vec<DMatrix<f64>> = (start..(start + CHUNK).min(nf))
            .into_par_iter()
            .map(|fid| face_matrix(disc, fid, terms))
            .collect::<Result<_>>()?;
        for (off, k) in locals.iter().enumerate() {
            let (dofs, signs) = face_dofs(disc, start + off);
            scatter(&mut a, &dofs, &signs, &dofs, &signs, k);
        }
    }
    Ok(a)
}

fn face_dofs(disc: &Discretization, fid: usize) -> (Vec<usize>, Vec<f64>) {
    let dm = &disc.space.dofs;
    let mut dofs = Vec::new();
    let mut signs = Vec::new();
    for s in &disc.mesh.faces[fid].sides {
        dofs.extend_from_slice(dm.velocity_dofs(s.element));
        signs.extend_from_slice(dm.velocity_signs(s.element));
    }
    (dofs, signs)
}

/// Face contributions over the combined local DOFs of the adjacent elements
/// (owner first).
fn face_matrix(disc: &Discretization, fid: usize, terms: FormTerms) -> Result<DMatrix<f64>> {
    let n = disc.space.dofs.local_velocity;
    let nsides = disc.mesh.faces[fid].sides.len();
    let avg = if nsides == 2 { 0.5 } else { 1.0 };
    let h = disc.faces.h[fid];
    let mut k = DMatrix::zeros(n * nsides, n * nsides);
    let sigma = [1.0, -1.0];
    for q in &disc.faces.points[fid] {
        // value and (grad phi) n per combined local DOF
        let mut vals = Vec::with_capacity(n * nsides);
        let mut gn = Vec::with_capacity(n * nsides);
        let mut sg = Vec::with_capacity(n * nsides);
        for side in 0..nsides {
            let ps = disc.face_shapes(fid, side, q)?;
            for a in 0..n {
                vals.push(ps.values[a]);
                gn.push(ps.grads[a] * q.normal);
                sg.push(sigma[side]);
            }
        }
        let w = q.weight;
        let pen = terms.penalty / h;
        for i in 0..n * nsides {
            for j in 0..n * nsides {
                let mut v = pen * sg[i] * sg[j] * vals[i].dot(&vals[j]);
                if terms.consistency {
                    v -= avg * sg[i] * vals[i].dot(&gn[j]) + avg * sg[j] * vals[j].dot(&gn[i]);
                }
                k[(i, j)] += w * v;
            }
        }
    }
    Ok(k)
}

/// The interior-penalty form `a_DG` on the full velocity space.
pub fn assemble_a_dg(disc: &Discretization, alpha: f64) -> Result<CsrMatrix> {
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("penalty must be positive, got {alpha}")));
    }
    assemble_dg_form(
        disc,
        FormTerms {
            penalty: alpha,
            consistency: true,
        },
    )
}

/// Gram matrix of the energy norm `|grad_h v|^2 + sum_F h_F^{-1} |[[v]]|_F^2`.
pub fn assemble_energy_gram(disc: &Discretization) -> Result<CsrMatrix> {
    assemble_dg_form(
        disc,
        FormTerms {
            penalty: 1.0,
            consistency: false,
        },
    )
}

/// `B[i][j] = int div(phi_j) psi_i dx` over `Omega_h`. Since `div v = div^ v^ / J_d`
/// and `dx = J_d dx^`, the element block is the same on every element.
pub fn assemble_div(disc: &Discretization) -> Result<CsrMatrix> {
    let space = disc.space;
    let dm = &space.dofs;
    let rule = tet_quadrature(2 * space.degree())?;
    let n = dm.local_velocity;
    let np = dm.local_pressure;
    let mut block = DMatrix::zeros(np, n);
    for (p, w) in rule.iter() {
        let t = space.bdm.tabulate(p);
        let q = space.pressure.values(p);
        for i in 0..np {
            for j in 0..n {
                block[(i, j)] += w * q[i] * t.grads[j].trace();
            }
        }
    }
    let mut rows = vec![Vec::new(); dm.n_pressure];
    for e in 0..disc.mesh.num_elements() {
        for r in dm.pressure_dofs(e) {
            rows[r].extend_from_slice(dm.velocity_dofs(e));
        }
    }
    let mut b = CsrMatrix::from_pattern(dm.n_pressure, dm.n_velocity, rows);
    let ones = vec![1.0; np];
    for e in 0..disc.mesh.num_elements() {
        let prow: Vec<usize> = dm.pressure_dofs(e).collect();
        scatter(&mut b, &prow, &ones, dm.velocity_dofs(e), dm.velocity_signs(e), &block);
    }
    Ok(b)
}

/// `(f_h, phi_i)` over `Omega_h`.
pub fn assemble_rhs(disc: &Discretization, f: VectorField, mode: RhsMode) -> Result<Vec<f64>> {
    let dm = &disc.space.dofs;
    let edges = if mode == RhsMode::Pullback {
        disc.mesh.boundary_edges()
    } else {
        HashSet::new()
    };
    let locals: Vec<Vec<f64>> = (0..disc.mesh.num_elements())
        .into_par_iter()
        .map(|e| -> Result<_> {
            let mut b = vec![0.0; dm.local_velocity];
            let map = &disc.maps[e];
            for ((w, ps), xi) in disc.element_points(e)?.into_iter().zip(&disc.volume_rule.points) {
                let x = match mode {
                    RhsMode::Pullback if !map.is_affine => blended_exact_point(disc.mesh, map, &edges, xi),
                    _ => ps.jd.point,
                };
                let fx = f(&x);
                if fx == Vector3::zeros() {
                    continue;
                }
                for (bi, v) in b.iter_mut().zip(&ps.values) {
                    *bi += w * fx.dot(v);
                }
            }
            Ok(b)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; dm.n_velocity];
    for (e, b) in locals.into_iter().enumerate() {
        for ((&g, s), v) in dm.velocity_dofs(e).iter().zip(dm.velocity_signs(e)).zip(b) {
            out[g] += s * v;
        }
    }
    Ok(out)
}

/// Image of `xi` under the boundary-fitted blend of `M_h`: on each curved face
/// the discrete surface is pushed onto the exact one along rays from the
/// opposite vertex, with a correction that vanishes linearly away from it.
/// Elements touching the curved boundary only along an edge use the analogous
/// edge blend.
pub fn blended_exact_point(
    mesh: &StraightMesh,
    map: &CurvedElementMap,
    boundary_edges: &HashSet<(usize, usize)>,
    xi: &Vector3<f64>,
) -> Vector3<f64> {
    let e = map.element;
    let lam = [1.0 - xi.sum(), xi.x, xi.y, xi.z];
    let vref = |l: usize| crate::geometry::ref_vertex(l);
    let geometry = &mesh.geometry;
    let x = map.point(xi);
    let mut correction = Vector3::zeros();
    let mut covered = [[false; 4]; 4];
    for lf in 0..4 {
        if !mesh.face_is_curved(mesh.element_faces[e][lf]) {
            continue;
        }
        let rest = 1.0 - lam[lf];
        if rest <= 1e-14 {
            continue;
        }
        let on_face = (xi - vref(lf) * lam[lf]) / rest;
        let y = map.point(&on_face);
        correction += (geometry.project(&y) - y) * rest;
        for a in LOCAL_FACES[lf] {
            for b in LOCAL_FACES[lf] {
                covered[a][b] = true;
            }
        }
    }
    let ids = mesh.tets[e].vertex_ids;
    for a in 0..4 {
        for b in a + 1..4 {
            if covered[a][b] {
                continue;
            }
            let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
            let curved = boundary_edges.contains(&key)
                && geometry.on_curved_surface(&mesh.vertices[ids[a]].coords)
                && geometry.on_curved_surface(&mesh.vertices[ids[b]].coords);
            let s = lam[a] + lam[b];
            if !curved || s <= 1e-14 {
                continue;
            }
            let on_edge = (vref(a) * lam[a] + vref(b) * lam[b]) / s;
            let y = map.point(&on_edge);
            correction += (geometry.project(&y) - y) * s;
        }
    }
    x + correction
}

/// Nitsche-type terms carrying Dirichlet data `g` into the velocity equation:
/// `-sum_F int {grad v}:(g (x) n) + sum_F alpha/h_F int (g (x) n):[[v]]` over
/// boundary faces (unscaled by the viscosity).
pub fn assemble_boundary_lift(disc: &Discretization, g: VectorField, alpha: f64) -> Result<Vec<f64>> {
    let dm = &disc.space.dofs;
    let n = dm.local_velocity;
    let boundary: Vec<usize> = (0..disc.mesh.faces.len())
        .filter(|&f| disc.mesh.faces[f].is_boundary())
        .collect();
    let locals: Vec<Vec<f64>> = boundary
        .par_iter()
        .map(|&fid| -> Result<_> {
            let mut b = vec![0.0; n];
            let h = disc.faces.h[fid];
            for q in &disc.faces.points[fid] {
                let gx = g(&q.x);
                if gx == Vector3::zeros() {
                    continue;
                }
                let ps = disc.face_shapes(fid, 0, q)?;
                for a in 0..n {
                    let gn = ps.grads[a] * q.normal;
                    b[a] += q.weight * (-gn.dot(&gx) + alpha / h * ps.values[a].dot(&gx));
                }
            }
            Ok(b)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; dm.n_velocity];
    for (&fid, b) in boundary.iter().zip(locals) {
        let e = disc.mesh.faces[fid].sides[0].element;
        for ((&gd, s), v) in dm.velocity_dofs(e).iter().zip(dm.velocity_signs(e)).zip(b) {
            out[gd] += s * v;
        }
    }
    Ok(out)
}

/// The constrained saddle-point system `[A B^T; B 0]` on the free velocity DOFs
/// (all DOFs except the boundary normal moments) and all pressure DOFs.
///
/// `A` stores `nu a_DG`. The unknown pressure block solves for `-p_h`, which keeps
/// the operator symmetric with `B` the plain divergence pairing.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub rhs_velocity: Vec<f64>,
    pub rhs_pressure: Vec<f64>,
    pub penalty: f64,
    pub viscosity: f64,
    /// Free velocity DOFs, in system order.
    pub free: Vec<usize>,
    pub constraint: NormalTraceConstraint,
    pub n_velocity: usize,
}

/// Inputs of [`assemble_system`].
pub struct ProblemData<'f> {
    pub source: Option<VectorField<'f>>,
    pub rhs_mode: RhsMode,
    /// Dirichlet data; `None` for homogeneous conditions.
    pub dirichlet: Option<VectorField<'f>>,
    pub alpha: f64,
    pub nu: f64,
}

/// Full (unconstrained) operators kept alongside the system for diagnostics.
#[derive(Clone, Debug)]
pub struct FullOperators {
    pub a_dg: CsrMatrix,
    pub b: CsrMatrix,
}

pub fn assemble_system(disc: &Discretization, data: &ProblemData) -> Result<(BlockSystem, FullOperators)> {
    if !(data.nu > 0.0) {
        return Err(Error::Config(format!("viscosity must be positive, got {}", data.nu)));
    }
    let a_dg = assemble_a_dg(disc, data.alpha)?;
    let b = assemble_div(disc)?;
    let nv = disc.space.dofs.n_velocity;
    let mut f = match data.source {
        Some(src) => assemble_rhs(disc, src, data.rhs_mode)?,
        None => vec![0.0; nv],
    };
    let constraint = crate::spaces::impose_zero_normal_trace(disc.mesh, disc.maps, disc.space, data.dirichlet)?;
    if let Some(g) = data.dirichlet {
        let lift = assemble_boundary_lift(disc, g, data.alpha)?;
        for (fi, l) in f.iter_mut().zip(lift) {
            *fi += data.nu * l;
        }
    }
    let system = eliminate(&a_dg, &b, f, data.nu, data.alpha, constraint);
    Ok((system, FullOperators { a_dg, b }))
}

/// Symmetric elimination of the constrained DOFs.
pub fn eliminate(
    a_dg: &CsrMatrix,
    b: &CsrMatrix,
    f: Vec<f64>,
    nu: f64,
    alpha: f64,
    constraint: NormalTraceConstraint,
) -> BlockSystem {
    let nv = a_dg.nrows;
    let mut fixed = vec![None; nv];
    for (&d, &v) in constraint.dofs.iter().zip(&constraint.values) {
        fixed[d] = Some(v);
    }
    let mut map = vec![None; nv];
    let mut free = Vec::with_capacity(nv - constraint.dofs.len());
    for (d, fx) in fixed.iter().enumerate() {
        if fx.is_none() {
            map[d] = Some(free.len());
            free.push(d);
        }
    }
    let mut g_full = vec![0.0; nv];
    for (d, fx) in fixed.iter().enumerate() {
        if let Some(v) = fx {
            g_full[d] = *v;
        }
    }
    let ag = a_dg.matvec(&g_full);
    let bg = b.matvec(&g_full);
    let mut a = a_dg.restrict(&map, &map, free.len(), free.len());
    a.data.iter_mut().for_each(|v| *v *= nu);
    let all_p: Vec<Option<usize>> = (0..b.nrows).map(Some).collect();
    let bf = b.restrict(&all_p, &map, b.nrows, free.len());
    let rhs_velocity = free.iter().map(|&d| f[d] - nu * ag[d]).collect();
    let rhs_pressure = bg.iter().map(|v| -v).collect();
    BlockSystem {
        a,
        b: bf,
        rhs_velocity,
        rhs_pressure,
        penalty: alpha,
        viscosity: nu,
        free,
        constraint,
        n_velocity: nv,
    }
}

impl BlockSystem {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn dimension(&self) -> usize {
        self.free.len() + self.b.nrows
    }

    /// Full velocity vector from free values plus the constrained data.
    pub fn expand_velocity(&self, free_values: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_velocity];
        for (&d, &v) in self.free.iter().zip(free_values) {
            u[d] = v;
        }
        self.constraint.apply(&mut u);
        u
    }
}

/// Writes the constrained system blocks in Matrix Market format.
pub fn export_matrix_market(system: &BlockSystem, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    system.a.write_matrix_market(&dir.join("A.mtx"))?;
    system.b.write_matrix_market(&dir.join("B.mtx"))?;
    Ok(())
}
