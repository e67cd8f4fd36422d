//! Legacy ASCII VTK output of discrete fields on curved meshes.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::assembly::Discretization;
use crate::error::{Error, Result};
use crate::poly::lattice;
use crate::spaces::{eval_divergence_physical, eval_pressure, eval_velocity_physical};

/// Sub-tetrahedra of the degree-`k` lattice of the reference tetrahedron, as
/// indices into `lattice(4, k)`; there are `k^3` of them.
pub fn lattice_subdivision(k: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 4]>) {
    let nodes = lattice(4, k);
    let index = |i: usize, j: usize, l: usize| {
        nodes
            .iter()
            .position(|m| m[1] == i && m[2] == j && m[3] == l)
            .expect("lattice node")
    };
    let points: Vec<Vector3<f64>> = nodes
        .iter()
        .map(|m| Vector3::new(m[1] as f64, m[2] as f64, m[3] as f64) / k as f64)
        .collect();
    let mut cells = Vec::with_capacity(k * k * k);
    for i in 0..k {
        for j in 0..k - i {
            for l in 0..k - i - j {
                cells.push([index(i, j, l), index(i + 1, j, l), index(i, j + 1, l), index(i, j, l + 1)]);
                if i + j + l + 2 <= k {
                    let a = index(i + 1, j, l);
                    let b = index(i, j + 1, l);
                    let c = index(i, j, l + 1);
                    let d = index(i + 1, j + 1, l);
                    let e = index(i + 1, j, l + 1);
                    let f = index(i, j + 1, l + 1);
                    cells.extend([[a, f, b, d], [a, f, d, e], [a, f, e, c], [a, f, c, b]]);
                }
                if i + j + l + 3 <= k {
                    cells.push([
                        index(i + 1, j + 1, l),
                        index(i + 1, j, l + 1),
                        index(i, j + 1, l + 1),
                        index(i + 1, j + 1, l + 1),
                    ]);
                }
            }
        }
    }
    for c in cells.iter_mut() {
        let p = c.map(|v| points[v]);
        if (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) < 0.0 {
            c.swap(2, 3);
        }
    }
    (points, cells)
}

/// Parsed content of a legacy unstructured-grid file.
#[derive(Clone, Debug, Default)]
pub struct VtkData {
    pub points: Vec<Vector3<f64>>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub vectors: Vec<(String, Vec<Vector3<f64>>)>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn to_legacy_string(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
        let _ = writeln!(s, "POINTS {} double", self.points.len());
        for p in &self.points {
            let _ = writeln!(s, "{:.12e} {:.12e} {:.12e}", p.x, p.y, p.z);
        }
        let size: usize = self.cells.iter().map(|c| c.len() + 1).sum();
        let _ = writeln!(s, "CELLS {} {}", self.cells.len(), size);
        for c in &self.cells {
            let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{} {}", c.len(), ids.join(" "));
        }
        let _ = writeln!(s, "CELL_TYPES {}", self.cell_types.len());
        for t in &self.cell_types {
            let _ = writeln!(s, "{t}");
        }
        if !self.vectors.is_empty() || !self.scalars.is_empty() {
            let _ = writeln!(s, "POINT_DATA {}", self.points.len());
        }
        for (name, v) in &self.vectors {
            let _ = writeln!(s, "VECTORS {name} double");
            for x in v {
                let _ = writeln!(s, "{:.12e} {:.12e} {:.12e}", x.x, x.y, x.z);
            }
        }
        for (name, v) in &self.scalars {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for x in v {
                let _ = writeln!(s, "{x:.12e}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("malformed VTK file: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        if !header.starts_with("# vtk DataFile Version") {
            return Err(bad("missing version header"));
        }
        lines.next();
        if lines.next().map(str::trim) != Some("ASCII") {
            return Err(bad("only ASCII files are supported"));
        }
        if lines.next().map(str::trim) != Some("DATASET UNSTRUCTURED_GRID") {
            return Err(bad("expected an unstructured grid"));
        }
        let mut tokens = lines.flat_map(str::split_whitespace).peekable();
        let mut next = || tokens.next().ok_or_else(|| bad("unexpected end of file"));
        let mut out = VtkData::default();
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad(t));
        let int = |t: &str| t.parse::<usize>().map_err(|_| bad(t));
        let mut n_points = 0;
        loop {
            let Ok(key) = next() else { break };
            match key {
                "POINTS" => {
                    n_points = int(next()?)?;
                    next()?;
                    for _ in 0..n_points {
                        out.points.push(Vector3::new(num(next()?)?, num(next()?)?, num(next()?)?));
                    }
                }
                "CELLS" => {
                    let n = int(next()?)?;
                    next()?;
                    for _ in 0..n {
                        let m = int(next()?)?;
                        let c = (0..m).map(|_| int(next()?)).collect::<Result<Vec<_>>>()?;
                        if c.iter().any(|&v| v >= n_points) {
                            return Err(bad("cell refers to a missing point"));
                        }
                        out.cells.push(c);
                    }
                }
                "CELL_TYPES" => {
                    let n = int(next()?)?;
                    for _ in 0..n {
                        out.cell_types.push(int(next()?)? as u8);
                    }
                }
                "POINT_DATA" => {
                    int(next()?)?;
                }
                "VECTORS" => {
                    let name = next()?.to_string();
                    next()?;
                    let v = (0..n_points)
                        .map(|_| Ok(Vector3::new(num(next()?)?, num(next()?)?, num(next()?)?)))
                        .collect::<Result<Vec<_>>>()?;
                    out.vectors.push((name, v));
                }
                "SCALARS" => {
                    let name = next()?.to_string();
                    next()?;
                    next()?;
                    if next()? != "LOOKUP_TABLE" {
                        return Err(bad("expected LOOKUP_TABLE"));
                    }
                    next()?;
                    let v = (0..n_points).map(|_| num(next()?)).collect::<Result<Vec<_>>>()?;
                    out.scalars.push((name, v));
                }
                other => return Err(bad(&format!("unknown section {other}"))),
            }
        }
        if out.cells.len() != out.cell_types.len() {
            return Err(bad("cell and cell-type counts differ"));
        }
        Ok(out)
    }
}

/// Samples velocity, pressure and divergence on the degree-`k` lattice of every
/// element (points are not shared between elements).
pub fn sample_fields(disc: &Discretization, velocity: &[f64], pressure: &[f64]) -> Result<VtkData> {
    let k = disc.space.degree();
    let (refs, sub) = lattice_subdivision(k);
    let mut out = VtkData::default();
    let mut u = Vec::new();
    let mut p = Vec::new();
    let mut div = Vec::new();
    for e in 0..disc.mesh.num_elements() {
        let base = out.points.len();
        let map = &disc.maps[e];
        for xi in &refs {
            out.points.push(map.point(xi));
            u.push(eval_velocity_physical(disc.space, velocity, map, xi)?);
            p.push(eval_pressure(disc.space, pressure, e, xi));
            div.push(eval_divergence_physical(disc.space, velocity, map, xi)?);
        }
        for c in &sub {
            out.cells.push(c.iter().map(|v| base + v).collect());
            out.cell_types.push(10);
        }
    }
    out.vectors.push(("velocity".into(), u));
    out.scalars.push(("pressure".into(), p));
    out.scalars.push(("divergence".into(), div));
    Ok(out)
}

pub fn export_vtk(disc: &Discretization, velocity: &[f64], pressure: &[f64], path: &Path) -> Result<()> {
    let data = sample_fields(disc, velocity, pressure)?;
    std::fs::write(path, data.to_legacy_string("pmfem velocity/pressure"))?;
    Ok(())
}

pub fn read_vtk(path: &Path) -> Result<VtkData> {
    VtkData::parse(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subdivision_counts_and_volume() {
        for k in 1..=4 {
            let (pts, cells) = lattice_subdivision(k);
            assert_eq!(pts.len(), (k + 1) * (k + 2) * (k + 3) / 6);
            assert_eq!(cells.len(), k * k * k);
            let vol: f64 = cells
                .iter()
                .map(|c| {
                    let p = c.map(|v| pts[v]);
                    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
                })
                .sum();
            assert!((vol - 1.0 / 6.0).abs() < 1e-14);
        }
    }
}
