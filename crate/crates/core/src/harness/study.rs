use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::manufactured::ManufacturedSolution;
use super::norms::{divergence_norms, energy_norm_error, pressure_l2_error};
use super::vtk::export_vtk;
use crate::assembly::{assemble_system, Discretization, ProblemData, QuadratureConfig, RhsMode};
use crate::error::{Error, Result};
use crate::geometry::{build_curved_maps, CurvedElementMap};
use crate::mesh::{generate_ball_mesh, generate_cavity_mesh, generate_cube_mesh, StraightMesh};
use crate::solver::{solve_minres, SolveReport, SolverConfig};
use crate::spaces::{FeSpace, FieldCoefficients, PressureMass};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Manufactured solution on the unit ball.
    #[default]
    Ball,
    /// Lid-driven flow in the unit cube with a ball removed.
    Cavity,
    /// Polynomial solution on straight cube meshes.
    Patch,
}

/// `Straight`: affine element maps with degree-`k` fields; `Curved`: degree-`k`
/// element maps fitted to the boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Straight,
    #[default]
    Curved,
}

impl std::str::FromStr for GeometryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(Self::Straight),
            "curved" => Ok(Self::Curved),
            _ => Err(Error::Config(format!("unknown geometry '{s}' (expected straight or curved)"))),
        }
    }
}

/// How Dirichlet data known on the exact boundary reach the discrete boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryData {
    /// `g(P(x))` with `P` the projection onto the exact curved boundary.
    #[default]
    Projected,
    /// The global formula evaluated at `x` itself.
    Extended,
}

impl std::str::FromStr for BoundaryData {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projected" => Ok(Self::Projected),
            "extended" => Ok(Self::Extended),
            _ => Err(Error::Config(format!("unknown boundary data '{s}' (expected projected or extended)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub degree: usize,
    pub alpha: f64,
    pub nu: f64,
    /// Number of mesh levels, starting from the coarsest.
    pub levels: usize,
    pub rhs_mode: RhsMode,
    pub geometry: GeometryKind,
    pub boundary_data: BoundaryData,
    /// Defaults to exactness `2k + 2`.
    pub quadrature: Option<QuadratureConfig>,
    pub solver: SolverConfig,
    pub out_dir: Option<PathBuf>,
    pub cavity_target_tets: usize,
    pub cavity_center: [f64; 3],
    pub cavity_radius: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Ball,
            degree: 2,
            alpha: 20.0,
            nu: 1.0,
            levels: 3,
            rhs_mode: RhsMode::Direct,
            geometry: GeometryKind::Curved,
            boundary_data: BoundaryData::Projected,
            quadrature: None,
            solver: SolverConfig::default(),
            out_dir: None,
            cavity_target_tets: 27_889,
            cavity_center: [0.5; 3],
            cavity_radius: 0.25,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.degree) {
            return Err(Error::Config(format!("degree must be 1, 2 or 3, got {}", self.degree)));
        }
        if self.levels == 0 {
            return Err(Error::Config("at least one level is required".into()));
        }
        if !(self.alpha > 0.0) || !(self.nu > 0.0) || !(self.solver.tol > 0.0) {
            return Err(Error::Config("penalty, viscosity and tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn geometric_degree(&self) -> usize {
        match self.geometry {
            GeometryKind::Straight => 1,
            GeometryKind::Curved => self.degree,
        }
    }

    fn quadrature(&self) -> QuadratureConfig {
        self.quadrature.unwrap_or(QuadratureConfig::for_degree(self.degree))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorReport {
    pub level: usize,
    pub h: f64,
    pub dofs_u: usize,
    pub dofs_p: usize,
    pub err_u_energy: f64,
    pub err_p_l2: f64,
    pub div_l2: f64,
    /// Largest `|div u_h|` over volume quadrature points.
    pub div_max: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub solve: SolveReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub experiment: Experiment,
    pub geometry: GeometryKind,
    pub degree: usize,
    pub reports: Vec<ErrorReport>,
    /// `log2(e_L / e_{L+1})` for each consecutive pair, `None` when the
    /// DOF-based mesh size `N^{-1/3}` does not halve within 10%.
    pub rates_u: Vec<Option<f64>>,
    pub rates_p: Vec<Option<f64>>,
    /// Set when a level failed; earlier levels are kept.
    pub failure: Option<String>,
}

impl ConvergenceRecord {
    pub fn last_rates(&self) -> (Option<f64>, Option<f64>) {
        (self.rates_u.last().copied().flatten(), self.rates_p.last().copied().flatten())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,h,dofs_u,dofs_p,err_u_energy,err_p_l2,div_l2,rate_u,rate_p,iters,seconds\n");
        let fmt = |r: Option<f64>| r.map(|v| format!("{v:.4}")).unwrap_or_default();
        for (i, r) in self.reports.iter().enumerate() {
            let (ru, rp) = if i == 0 {
                (None, None)
            } else {
                (self.rates_u[i - 1], self.rates_p[i - 1])
            };
            s.push_str(&format!(
                "{},{:.6e},{},{},{:.6e},{:.6e},{:.6e},{},{},{},{:.3}\n",
                r.level,
                r.h,
                r.dofs_u,
                r.dofs_p,
                r.err_u_energy,
                r.err_p_l2,
                r.div_l2,
                fmt(ru),
                fmt(rp),
                r.iterations,
                r.seconds
            ));
        }
        s
    }
}

/// Rate between consecutive levels, reported only when `N^{-1/3}` halves within 10%.
pub fn observed_rate(e0: f64, e1: f64, dofs0: usize, dofs1: usize) -> Option<f64> {
    let shrink = (dofs0 as f64 / dofs1 as f64).cbrt();
    if (shrink - 0.5).abs() > 0.05 || !(e0 > 0.0) || !(e1 > 0.0) {
        return None;
    }
    Some((e0 / e1).log2())
}

/// Discrete solution with everything needed to post-process it.
pub struct LevelSolution {
    pub mesh: StraightMesh,
    pub maps: Vec<CurvedElementMap>,
    pub space: FeSpace,
    pub fields: FieldCoefficients,
    pub solve: SolveReport,
    pub quadrature: QuadratureConfig,
}

impl LevelSolution {
    pub fn discretization(&self) -> Result<Discretization<'_>> {
        Discretization::new(&self.mesh, &self.maps, &self.space, self.quadrature)
    }
}

/// Assembles and solves one Stokes problem on `mesh`.
pub fn solve_on_mesh(
    mesh: StraightMesh,
    cfg: &RunConfig,
    source: Option<&(dyn Fn(&Vector3<f64>) -> Vector3<f64> + Sync)>,
    dirichlet: Option<&(dyn Fn(&Vector3<f64>) -> Vector3<f64> + Sync)>,
) -> Result<LevelSolution> {
    let maps = build_curved_maps(&mesh, cfg.geometric_degree())?;
    let space = FeSpace::new(&mesh, cfg.degree)?;
    let quadrature = cfg.quadrature();
    let (fields, solve) = {
        let disc = Discretization::new(&mesh, &maps, &space, quadrature)?;
        let data = ProblemData {
            source,
            rhs_mode: cfg.rhs_mode,
            dirichlet,
            alpha: cfg.alpha,
            nu: cfg.nu,
        };
        let (system, _) = assemble_system(&disc, &data)?;
        let mass = PressureMass::new(&space, &maps)?;
        let (fields, mut report) = solve_minres(&system, &space, &mass, &cfg.solver)?;
        if !report.converged {
            return Err(Error::Solver(format!(
                "MINRES stopped after {} iterations at relative residual {:.3e}",
                report.iterations, report.relative_residual
            )));
        }
        report.divergence_l2 = Some(divergence_norms(&disc, &fields.velocity)?.0);
        (fields, report)
    };
    Ok(LevelSolution {
        mesh,
        maps,
        space,
        fields,
        solve,
        quadrature,
    })
}

fn level_mesh(cfg: &RunConfig, level: usize) -> Result<StraightMesh> {
    match cfg.experiment {
        Experiment::Ball => generate_ball_mesh(1.0, level),
        Experiment::Patch => generate_cube_mesh(1 << (level + 1)),
        Experiment::Cavity => Err(Error::Config("the cavity experiment has no convergence study".into())),
    }
}

fn manufactured(cfg: &RunConfig) -> ManufacturedSolution {
    match cfg.experiment {
        Experiment::Patch => ManufacturedSolution::polynomial(cfg.degree),
        _ => ManufacturedSolution::ball_example(),
    }
}

/// Solves and measures errors of the manufactured solution on one level.
pub fn run_level(cfg: &RunConfig, level: usize) -> Result<ErrorReport> {
    let start = Instant::now();
    let sol = manufactured(cfg);
    let nu = cfg.nu;
    let source = |x: &Vector3<f64>| sol.source(nu, x);
    let mesh = level_mesh(cfg, level)?;
    let geometry = mesh.geometry;
    let projected = cfg.boundary_data == BoundaryData::Projected;
    let g = |x: &Vector3<f64>| if projected { (sol.u)(&geometry.project(x)) } else { (sol.u)(x) };
    let out = solve_on_mesh(mesh, cfg, Some(&source), Some(&g))?;
    let disc = out.discretization()?;
    let err_u = energy_norm_error(&disc, &out.fields.velocity, &*sol.u, &*sol.grad_u)?;
    let err_p = pressure_l2_error(&disc, &out.fields.pressure, &*sol.p)?;
    let (div_l2, div_max) = divergence_norms(&disc, &out.fields.velocity)?;
    Ok(ErrorReport {
        level,
        h: out.mesh.mesh_size,
        dofs_u: out.space.dofs.n_velocity,
        dofs_p: out.space.dofs.n_pressure,
        err_u_energy: err_u,
        err_p_l2: err_p,
        div_l2,
        div_max,
        iterations: out.solve.iterations,
        seconds: start.elapsed().as_secs_f64(),
        solve: out.solve,
    })
}

/// Runs levels `0..cfg.levels` of the ball or patch experiment; writes
/// `convergence_<geometry>.csv` and `.json` when an output directory is set.
pub fn run_convergence_study(cfg: &RunConfig) -> Result<ConvergenceRecord> {
    cfg.validate()?;
    let mut record = ConvergenceRecord {
        experiment: cfg.experiment,
        geometry: cfg.geometry,
        degree: cfg.degree,
        reports: Vec::new(),
        rates_u: Vec::new(),
        rates_p: Vec::new(),
        failure: None,
    };
    for level in 0..cfg.levels {
        match run_level(cfg, level) {
            Ok(r) => {
                if let Some(prev) = record.reports.last() {
                    record.rates_u.push(observed_rate(prev.err_u_energy, r.err_u_energy, prev.dofs_u, r.dofs_u));
                    record.rates_p.push(observed_rate(prev.err_p_l2, r.err_p_l2, prev.dofs_u, r.dofs_u));
                }
                record.reports.push(r);
            }
            Err(e) => {
                record.failure = Some(format!("level {level}: {e}"));
                break;
            }
        }
    }
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let stem = match cfg.geometry {
            GeometryKind::Straight => "convergence_straight",
            GeometryKind::Curved => "convergence_curved",
        };
        std::fs::write(dir.join(format!("{stem}.csv")), record.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&record)?)?;
    }
    Ok(record)
}

/// Lid velocity `(1, 0, 0)` on `z = 1`, zero elsewhere on the boundary.
pub fn lid_velocity(x: &Vector3<f64>) -> Vector3<f64> {
    if (x.z - 1.0).abs() < 1e-12 {
        Vector3::x()
    } else {
        Vector3::zeros()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CavityReport {
    pub tets: usize,
    pub dofs_u: usize,
    pub dofs_p: usize,
    pub div_l2: f64,
    pub div_max: f64,
    /// `int u_h . e_z` over the mesh faces in the plane `z = 0.5`.
    pub cut_flux: f64,
    pub cut_area: f64,
    /// End points of the line source for streamline seeding.
    pub streamline_seed: [[f64; 3]; 2],
    pub vtk: Option<PathBuf>,
    pub solve: SolveReport,
}

/// Flux of `u_h` in the `+e_z` direction through the mesh faces lying in the
/// plane `z = z0`, and the area of those faces.
pub fn plane_flux(disc: &Discretization, velocity: &[f64], z0: f64) -> Result<(f64, f64)> {
    let mut flux = 0.0;
    let mut area = 0.0;
    for (fid, f) in disc.mesh.faces.iter().enumerate() {
        if !f.vertex_ids.iter().all(|&v| (disc.mesh.vertices[v].coords.z - z0).abs() < 1e-12) {
            continue;
        }
        let e = f.sides[0].element;
        let c = disc.space.dofs.local_velocity_coefficients(e, velocity);
        for q in &disc.faces.points[fid] {
            let ps = disc.face_shapes(fid, 0, q)?;
            let u: Vector3<f64> = ps.values.iter().zip(&c).map(|(v, a)| v * *a).sum();
            flux += q.weight * u.z;
            area += q.weight;
        }
    }
    Ok((flux, area))
}

pub fn run_cavity(cfg: &RunConfig) -> Result<CavityReport> {
    cfg.validate()?;
    let center = Vector3::from(cfg.cavity_center);
    let mesh = generate_cavity_mesh(center, cfg.cavity_radius, cfg.cavity_target_tets)?;
    let out = solve_on_mesh(mesh, cfg, None, Some(&lid_velocity))?;
    let disc = out.discretization()?;
    let (div_l2, div_max) = divergence_norms(&disc, &out.fields.velocity)?;
    let (cut_flux, cut_area) = plane_flux(&disc, &out.fields.velocity, center.z)?;
    let mut vtk = None;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("cavity.vtk");
        export_vtk(&disc, &out.fields.velocity, &out.fields.pressure, &path)?;
        vtk = Some(path);
    }
    let report = CavityReport {
        tets: out.mesh.num_elements(),
        dofs_u: out.space.dofs.n_velocity,
        dofs_p: out.space.dofs.n_pressure,
        div_l2,
        div_max,
        cut_flux,
        cut_area,
        streamline_seed: [[0.0, 0.5, 0.8], [1.0, 0.5, 0.8]],
        vtk,
        solve: out.solve,
    };
    if let Some(dir) = &cfg.out_dir {
        let mut f = std::fs::File::create(dir.join("cavity.json"))?;
        f.write_all(serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    Ok(report)
}
