use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmfem::assembly::RhsMode;
use pmfem::geometry::{boundary_geometric_error, build_curved_maps, verify_jacobian_bounds};
use pmfem::harness::{run_cavity, run_convergence_study, BoundaryData, ConvergenceRecord, Experiment, GeometryKind, RunConfig};
use pmfem::mesh::{generate_ball_mesh, load_mesh, validate_topology, MeshFormat, StraightMesh};
use pmfem::solver::VelocityBlock;
use pmfem::spaces::FeSpace;

#[derive(Parser)]
#[command(name = "pmfem", version, about = "Divergence-free BDM/IPDG Stokes solver on curved tetrahedral meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manufactured-solution convergence study on refined ball meshes.
    Convergence(RunArgs),
    /// Lid-driven flow around a ball inside the unit cube.
    Cavity(RunArgs),
    /// Polynomial solution on straight cube meshes, reproduced to round-off.
    Patch(RunArgs),
    /// Print mesh statistics, topology issues and geometry-map bounds.
    InspectMesh(InspectArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON run configuration; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Polynomial degree k of the velocity space (1-3) [default: 2].
    #[arg(long)]
    degree: Option<usize>,
    /// Number of mesh levels [default: 3].
    #[arg(long)]
    levels: Option<usize>,
    /// Interior penalty parameter [default: 20].
    #[arg(long)]
    alpha: Option<f64>,
    /// Viscosity [default: 1].
    #[arg(long)]
    nu: Option<f64>,
    /// How the source is integrated: direct or pullback [default: direct].
    #[arg(long)]
    rhs_mode: Option<RhsMode>,
    /// Element maps: straight (affine) or curved (degree k) [default: curved].
    #[arg(long)]
    geometry: Option<GeometryKind>,
    /// Dirichlet data on the discrete boundary: projected or extended [default: projected].
    #[arg(long)]
    boundary_data: Option<BoundaryData>,
    /// MINRES relative tolerance [default: 1e-12].
    #[arg(long)]
    tol: Option<f64>,
    /// Velocity block of the preconditioner: cholesky, jacobi, sgs, inner_cg [default: cholesky].
    #[arg(long)]
    preconditioner: Option<VelocityBlock>,
    /// Target tetrahedron count of the cavity mesh [default: 27889].
    #[arg(long)]
    target_tets: Option<usize>,
    /// Output directory for CSV, JSON and VTK files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Mesh file; without it a generated ball mesh is inspected.
    path: Option<PathBuf>,
    /// File format: tetmesh or gmsh.
    #[arg(long, default_value = "tetmesh")]
    format: MeshFormat,
    /// Refinement level of the generated ball mesh.
    #[arg(long, default_value_t = 0)]
    level: usize,
    /// Degree of the geometry maps used for the bounds report.
    #[arg(long, default_value_t = 2)]
    degree: usize,
}

impl RunArgs {
    fn config(&self, experiment: Experiment) -> pmfem::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        cfg.experiment = experiment;
        if experiment == Experiment::Patch && self.geometry.is_none() {
            cfg.geometry = GeometryKind::Straight;
        }
        if let Some(v) = self.degree {
            cfg.degree = v;
        }
        if let Some(v) = self.levels {
            cfg.levels = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.nu {
            cfg.nu = v;
        }
        if let Some(v) = self.rhs_mode {
            cfg.rhs_mode = v;
        }
        if let Some(v) = self.geometry {
            cfg.geometry = v;
        }
        if let Some(v) = self.boundary_data {
            cfg.boundary_data = v;
        }
        if let Some(v) = self.tol {
            cfg.solver.tol = v;
        }
        if let Some(v) = self.preconditioner {
            cfg.solver.velocity_block = v;
        }
        if let Some(v) = self.target_tets {
            cfg.cavity_target_tets = v;
        }
        if let Some(v) = &self.out {
            cfg.out_dir = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_record(rec: &ConvergenceRecord) {
    print!("{}", rec.to_csv());
    if let Some(f) = &rec.failure {
        eprintln!("stopped early: {f}");
    }
}

fn inspect(args: &InspectArgs) -> pmfem::Result<()> {
    let mesh: StraightMesh = match &args.path {
        Some(p) => load_mesh(p, args.format)?,
        None => generate_ball_mesh(1.0, args.level)?,
    };
    let topology = validate_topology(&mesh);
    let maps = build_curved_maps(&mesh, args.degree)?;
    let bounds = verify_jacobian_bounds(&maps);
    let space = FeSpace::new(&mesh, args.degree)?;
    let summary = serde_json::json!({
        "vertices": mesh.vertices.len(),
        "tets": mesh.num_elements(),
        "interior_faces": mesh.num_interior_faces(),
        "boundary_faces": mesh.num_boundary_faces(),
        "h": mesh.mesh_size,
        "quasi_uniformity": mesh.quasi_uniformity(),
        "volume": mesh.total_volume(),
        "dofs_u": space.dofs.n_velocity,
        "dofs_p": space.dofs.n_pressure,
        "boundary_geometric_error": boundary_geometric_error(&mesh, &maps),
        "jacobian_bounds": bounds,
        "topology_issues": topology.issues,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run(cli: Cli) -> pmfem::Result<bool> {
    match cli.command {
        Command::Convergence(a) => {
            let rec = run_convergence_study(&a.config(Experiment::Ball)?)?;
            print_record(&rec);
            Ok(rec.failure.is_none())
        }
        Command::Patch(a) => {
            let mut cfg = a.config(Experiment::Patch)?;
            if a.levels.is_none() && a.config.is_none() {
                cfg.levels = 2;
            }
            let rec = run_convergence_study(&cfg)?;
            print_record(&rec);
            Ok(rec.failure.is_none())
        }
        Command::Cavity(a) => {
            let rep = run_cavity(&a.config(Experiment::Cavity)?)?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
            Ok(true)
        }
        Command::InspectMesh(a) => inspect(&a).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
