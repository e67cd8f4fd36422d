//! Divergence-free parametric BDM(k)/P(k-1) interior-penalty finite elements for
//! the Stokes equations on curved tetrahedral meshes.

pub mod error;
pub mod geometry;
pub mod mesh;
pub mod poly;

pub use error::{Error, Result};
pub mod spaces;
pub mod sparse;
pub mod assembly;
pub mod solver;
pub mod harness;
