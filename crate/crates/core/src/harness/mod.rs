//! Manufactured solutions, error norms, the ball and cavity experiments, and
//! CSV/JSON/VTK output.

mod manufactured;
mod norms;
mod study;
mod vtk;

pub use manufactured::ManufacturedSolution;
pub use norms::{divergence_l2, divergence_norms, energy_norm_error, pressure_l2_error, velocity_l2_error};
pub use study::{
    lid_velocity, observed_rate, BoundaryData, plane_flux, run_cavity, run_convergence_study, run_level, solve_on_mesh, CavityReport,
    ConvergenceRecord, ErrorReport, Experiment, GeometryKind, LevelSolution, RunConfig,
};
pub use vtk::{export_vtk, lattice_subdivision, read_vtk, sample_fields, VtkData};
