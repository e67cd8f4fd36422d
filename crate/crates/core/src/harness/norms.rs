use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::assembly::Discretization;
use crate::error::Result;
use crate::spaces::eval_pressure;

fn local_field(disc: &Discretization, e: usize, coeffs: &[f64]) -> Vec<f64> {
    disc.space.dofs.local_velocity_coefficients(e, coeffs)
}

fn combine_values(values: &[Vector3<f64>], c: &[f64]) -> Vector3<f64> {
    values.iter().zip(c).map(|(v, a)| v * *a).sum()
}

fn combine_grads(grads: &[Matrix3<f64>], c: &[f64]) -> Matrix3<f64> {
    grads.iter().zip(c).fold(Matrix3::zeros(), |acc, (g, a)| acc + g * *a)
}

/// `|u - u_h|` in the jump-augmented energy norm over `Omega_h`. Interior jumps of
/// the exact solution vanish; on boundary faces the jump is `(u - u_h) (x) n`.
pub fn energy_norm_error(
    disc: &Discretization,
    velocity: &[f64],
    u: &(dyn Fn(&Vector3<f64>) -> Vector3<f64> + Sync),
    grad_u: &(dyn Fn(&Vector3<f64>) -> Matrix3<f64> + Sync),
) -> Result<f64> {
    let volume: f64 = (0..disc.mesh.num_elements())
        .into_par_iter()
        .map(|e| -> Result<f64> {
            let c = local_field(disc, e, velocity);
            let mut s = 0.0;
            for (w, ps) in disc.element_points(e)? {
                let d = grad_u(&ps.jd.point) - combine_grads(&ps.grads, &c);
                s += w * d.norm_squared();
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    let faces: f64 = (0..disc.mesh.faces.len())
        .into_par_iter()
        .map(|fid| -> Result<f64> {
            let rec = &disc.mesh.faces[fid];
            let c0 = local_field(disc, rec.sides[0].element, velocity);
            let c1 = rec.sides.get(1).map(|s| local_field(disc, s.element, velocity));
            let mut s = 0.0;
            for q in &disc.faces.points[fid] {
                let v0 = combine_values(&disc.face_shapes(fid, 0, q)?.values, &c0);
                let jump = match &c1 {
                    Some(c1) => v0 - combine_values(&disc.face_shapes(fid, 1, q)?.values, c1),
                    None => u(&q.x) - v0,
                };
                s += q.weight * jump.norm_squared();
            }
            Ok(s / disc.faces.h[fid])
        })
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    Ok((volume + faces).sqrt())
}

/// `|p - p_h|_{L2(Omega_h)}` with both pressures shifted to zero mean over `Omega_h`.
pub fn pressure_l2_error(disc: &Discretization, pressure: &[f64], p: &(dyn Fn(&Vector3<f64>) -> f64 + Sync)) -> Result<f64> {
    let space = disc.space;
    let rule = disc.volume_rule();
    let diffs = |e: usize| -> Result<Vec<(f64, f64)>> {
        rule.iter()
            .map(|(xi, w)| {
                let jd = disc.maps[e].jacobian_at(xi)?;
                Ok((w * jd.det, p(&jd.point) - eval_pressure(space, pressure, e, xi)))
            })
            .collect()
    };
    // two passes: the mean of p - p_h, then the centered square
    let firsts: Vec<(f64, f64)> = (0..disc.mesh.num_elements())
        .into_par_iter()
        .map(|e| Ok(diffs(e)?.iter().fold((0.0, 0.0), |acc, (w, d)| (acc.0 + w, acc.1 + w * d))))
        .collect::<Result<_>>()?;
    let (vol, int) = firsts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = int / vol;
    let seconds: Vec<f64> = (0..disc.mesh.num_elements())
        .into_par_iter()
        .map(|e| Ok(diffs(e)?.iter().map(|(w, d)| w * (d - mean) * (d - mean)).sum()))
        .collect::<Result<_>>()?;
    Ok(seconds.iter().sum::<f64>().sqrt())
}

/// `|div u_h|_{L2(Omega_h)}` and the largest `|div u_h|` over the volume
/// quadrature points.
pub fn divergence_norms(disc: &Discretization, velocity: &[f64]) -> Result<(f64, f64)> {
    let parts: Vec<(f64, f64)> = (0..disc.mesh.num_elements())
        .into_par_iter()
        .map(|e| -> Result<(f64, f64)> {
            let c = local_field(disc, e, velocity);
            let mut s = 0.0;
            let mut m: f64 = 0.0;
            for (w, ps) in disc.element_points(e)? {
                let d: f64 = ps.divs.iter().zip(&c).map(|(a, b)| a * b).sum();
                s += w * d * d;
                m = m.max(d.abs());
            }
            Ok((s, m))
        })
        .collect::<Result<_>>()?;
    let l2 = parts.iter().map(|p| p.0).sum::<f64>().sqrt();
    let max = parts.iter().fold(0.0f64, |m, p| m.max(p.1));
    Ok((l2, max))
}

pub fn divergence_l2(disc: &Discretization, velocity: &[f64]) -> Result<f64> {
    Ok(divergence_norms(disc, velocity)?.0)
}

/// `|u - u_h|_{L2(Omega_h)}`.
pub fn velocity_l2_error(
    disc: &Discretization,
    velocity: &[f64],
    u: &(dyn Fn(&Vector3<f64>) -> Vector3<f64> + Sync),
) -> Result<f64> {
    let s: f64 = (0..disc.mesh.num_elements())
        .into_par_iter()
        .map(|e| -> Result<f64> {
            let c = local_field(disc, e, velocity);
            let mut s = 0.0;
            for (w, ps) in disc.element_points(e)? {
                s += w * (u(&ps.jd.point) - combine_values(&ps.values, &c)).norm_squared();
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    Ok(s.sqrt())
}
