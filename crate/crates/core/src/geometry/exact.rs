use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Tolerance used to decide whether a point sits on an exact boundary surface.
pub const ON_SURFACE_TOL: f64 = 1e-9;

/// Exact description of the curved part of the domain boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExactGeometry {
    /// No curved boundary: meshes are taken as exact.
    Identity,
    /// Ball `|x - center| < radius`.
    Sphere { center: [f64; 3], radius: f64 },
    /// Unit cube `(0,1)^3` with the closed ball `|x - center| <= radius` removed.
    CubeMinusSphere { center: [f64; 3], radius: f64 },
}

impl ExactGeometry {
    pub fn sphere(center: Vector3<f64>, radius: f64) -> Self {
        Self::Sphere {
            center: center.into(),
            radius,
        }
    }

    pub fn cube_minus_sphere(center: Vector3<f64>, radius: f64) -> Self {
        Self::CubeMinusSphere {
            center: center.into(),
            radius,
        }
    }

    fn ball(&self) -> Option<(Vector3<f64>, f64)> {
        match *self {
            Self::Identity => None,
            Self::Sphere { center, radius } | Self::CubeMinusSphere { center, radius } => {
                Some((Vector3::from(center), radius))
            }
        }
    }

    /// Whether `x` lies on the curved (spherical) part of the boundary.
    pub fn on_curved_surface(&self, x: &Vector3<f64>) -> bool {
        match self.ball() {
            Some((c, r)) => ((x - c).norm() - r).abs() <= ON_SURFACE_TOL * r.max(1.0),
            None => false,
        }
    }

    /// Radial projection onto the curved surface.
    pub fn project(&self, x: &Vector3<f64>) -> Vector3<f64> {
        match self.ball() {
            Some((c, r)) => {
                let d = x - c;
                let n = d.norm();
                if n == 0.0 {
                    *x
                } else {
                    c + d * (r / n)
                }
            }
            None => *x,
        }
    }

    /// Snap a point that lies on a flat boundary face of the cube exactly onto
    /// the face plane(s).
    pub fn snap_flat(&self, x: &Vector3<f64>) -> Vector3<f64> {
        match self {
            Self::CubeMinusSphere { .. } => x.map(|t| {
                if t.abs() < ON_SURFACE_TOL {
                    0.0
                } else if (t - 1.0).abs() < ON_SURFACE_TOL {
                    1.0
                } else {
                    t
                }
            }),
            _ => *x,
        }
    }

    /// Distance from a boundary point to the exact boundary (0 for flat parts).
    pub fn boundary_distance(&self, x: &Vector3<f64>) -> f64 {
        match *self {
            Self::Identity => 0.0,
            Self::Sphere { center, radius } => ((x - Vector3::from(center)).norm() - radius).abs(),
            Self::CubeMinusSphere { center, radius } => {
                let ds = ((x - Vector3::from(center)).norm() - radius).abs();
                let dc = x
                    .iter()
                    .map(|t| t.abs().min((t - 1.0).abs()))
                    .fold(f64::INFINITY, f64::min);
                ds.min(dc)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_sphere() {
        let g = ExactGeometry::sphere(Vector3::new(0.5, 0.5, 0.5), 0.25);
        for p in [
            Vector3::new(0.9, 0.1, 0.3),
            Vector3::new(0.5, 0.5, 0.76),
            Vector3::new(0.51, 0.49, 0.5),
        ] {
            let q = g.project(&p);
            assert!(((q - Vector3::repeat(0.5)).norm() - 0.25).abs() < 1e-14);
            assert!(g.on_curved_surface(&q));
        }
    }
}
