use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("mesh topology error: {0}")]
    Topology(String),
    #[error("element {element}: singular geometry map (det J = {det:.3e})")]
    SingularMap { element: usize, det: f64 },
    #[error("unsupported quadrature exactness degree {0} (supported: 1..=14)")]
    UnsupportedQuadrature(usize),
    #[error("unsupported polynomial degree {0} (supported: 1..=3)")]
    UnsupportedDegree(usize),
    #[error("cavity mesh target of {0} tetrahedra is too coarse to resolve the ball")]
    InfeasibleTarget(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("linear solver failure: {0}")]
    Solver(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
