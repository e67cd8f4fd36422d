//! Mesh readers: the line-oriented `tetmesh 1` format and a Gmsh 2.2 ASCII subset.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;

use super::StraightMesh;
use crate::error::{Error, Result};
use crate::geometry::ExactGeometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    TetMesh,
    Gmsh22,
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tetmesh" => Ok(Self::TetMesh),
            "gmsh" | "msh" | "gmsh22" => Ok(Self::Gmsh22),
            other => Err(Error::Config(format!("unknown mesh format '{other}'"))),
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<StraightMesh> {
    let text = std::fs::read_to_string(path)?;
    match format {
        MeshFormat::TetMesh => parse_tetmesh(&text, path),
        MeshFormat::Gmsh22 => parse_gmsh(&text, path),
    }
}

struct Lines<'a> {
    path: PathBuf,
    iter: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, path: &Path) -> Self {
        Self {
            path: path.to_path_buf(),
            iter: text.lines().enumerate().peekable(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    /// Next non-blank, non-comment line.
    fn next(&mut self) -> Option<&'a str> {
        for (i, l) in self.iter.by_ref() {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.line = i + 1;
            return Some(t);
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<&'a str> {
        self.next().ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn numbers<T: FromStr>(&self, line: &str, count: usize) -> Result<Vec<T>> {
        let v: Vec<T> = line
            .split_whitespace()
            .map(|t| t.parse::<T>().map_err(|_| self.err(format!("invalid number '{t}'"))))
            .collect::<Result<_>>()?;
        if v.len() < count {
            return Err(self.err(format!("expected {count} values, found {}", v.len())));
        }
        Ok(v)
    }
}

fn topology_with_line(e: Error, tet_lines: &[usize], path: &Path) -> Error {
    match e {
        Error::Topology(msg) => {
            // messages name the element as "element N"
            let line = msg
                .split("element ")
                .nth(1)
                .and_then(|s| s.split(|c: char| !c.is_ascii_digit()).next())
                .and_then(|s| s.parse::<usize>().ok())
                .and_then(|e| tet_lines.get(e).copied())
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            }
        }
        other => other,
    }
}

pub fn parse_tetmesh(text: &str, path: &Path) -> Result<StraightMesh> {
    let mut lines = Lines::new(text, path);
    let header = lines.expect("header")?;
    if header != "tetmesh 1" {
        return Err(lines.err(format!("expected header 'tetmesh 1', found '{header}'")));
    }
    let mut coords = Vec::new();
    let mut tets = Vec::new();
    let mut tet_lines = Vec::new();
    let mut geometry = ExactGeometry::Identity;
    while let Some(l) = lines.next() {
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("vertices") => {
                let n: usize = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| lines.err("expected vertex count"))?;
                for _ in 0..n {
                    let l = lines.expect("vertex coordinates")?;
                    let v: Vec<f64> = lines.numbers(l, 3)?;
                    if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
                        return Err(lines.err("vertex line must hold 3 finite coordinates"));
                    }
                    coords.push(Vector3::new(v[0], v[1], v[2]));
                }
            }
            Some("tets") => {
                let n: usize = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| lines.err("expected tet count"))?;
                for _ in 0..n {
                    let l = lines.expect("tetrahedron indices")?;
                    let v: Vec<usize> = lines.numbers(l, 4)?;
                    if v.len() != 4 {
                        return Err(lines.err("tet line must hold 4 vertex indices"));
                    }
                    if v.iter().any(|&i| i >= coords.len()) {
                        return Err(lines.err("tet references a vertex that does not exist"));
                    }
                    tets.push([v[0], v[1], v[2], v[3]]);
                    tet_lines.push(lines.line);
                }
            }
            Some("boundary_geometry") => {
                let kind = parts.next().ok_or_else(|| lines.err("missing geometry kind"))?;
                let rest: Vec<f64> = lines.numbers(&parts.collect::<Vec<_>>().join(" "), 4)?;
                let c = Vector3::new(rest[0], rest[1], rest[2]);
                geometry = match kind {
                    "sphere" => ExactGeometry::sphere(c, rest[3]),
                    "cube_minus_sphere" => ExactGeometry::cube_minus_sphere(c, rest[3]),
                    other => return Err(lines.err(format!("unknown boundary geometry '{other}'"))),
                };
            }
            Some(other) => return Err(lines.err(format!("unknown section '{other}'"))),
            None => {}
        }
    }
    if tets.is_empty() {
        return Err(lines.err("mesh contains no tetrahedra"));
    }
    StraightMesh::from_raw(coords, tets, geometry).map_err(|e| topology_with_line(e, &tet_lines, path))
}

pub fn write_tetmesh(mesh: &StraightMesh) -> String {
    let mut s = String::from("tetmesh 1\n");
    let _ = writeln!(s, "vertices {}", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", v.coords.x, v.coords.y, v.coords.z);
    }
    let _ = writeln!(s, "tets {}", mesh.tets.len());
    for t in &mesh.tets {
        let v = t.vertex_ids;
        let _ = writeln!(s, "{} {} {} {}", v[0], v[1], v[2], v[3]);
    }
    match mesh.geometry {
        ExactGeometry::Identity => {}
        ExactGeometry::Sphere { center: c, radius } => {
            let _ = writeln!(s, "boundary_geometry sphere {} {} {} {}", c[0], c[1], c[2], radius);
        }
        ExactGeometry::CubeMinusSphere { center: c, radius } => {
            let _ = writeln!(
                s,
                "boundary_geometry cube_minus_sphere {} {} {} {}",
                c[0], c[1], c[2], radius
            );
        }
    }
    s
}

/// Reads nodes and 4-node tetrahedra (element type 4) from an ASCII Gmsh 2.2
/// file; every other element type is skipped.
pub fn parse_gmsh(text: &str, path: &Path) -> Result<StraightMesh> {
    let mut lines = Lines::new(text, path);
    let mut node_index: HashMap<usize, usize> = HashMap::new();
    let mut coords = Vec::new();
    let mut tets = Vec::new();
    let mut tet_lines = Vec::new();
    let mut saw_format = false;
    while let Some(l) = lines.next() {
        match l {
            "$MeshFormat" => {
                let f = lines.expect("format line")?;
                let version = f.split_whitespace().next().unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(lines.err(format!("unsupported Gmsh version {version}")));
                }
                if f.split_whitespace().nth(1) != Some("0") {
                    return Err(lines.err("only ASCII Gmsh files are supported"));
                }
                saw_format = true;
                lines.expect("$EndMeshFormat")?;
            }
            "$Nodes" => {
                let n: usize = lines
                    .expect("node count")?
                    .parse()
                    .map_err(|_| lines.err("invalid node count"))?;
                for _ in 0..n {
                    let l = lines.expect("node")?;
                    let mut it = l.split_whitespace();
                    let id: usize = it
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| lines.err("invalid node id"))?;
                    let v: Vec<f64> = lines.numbers(&it.collect::<Vec<_>>().join(" "), 3)?;
                    node_index.insert(id, coords.len());
                    coords.push(Vector3::new(v[0], v[1], v[2]));
                }
                if lines.expect("$EndNodes")? != "$EndNodes" {
                    return Err(lines.err("expected $EndNodes"));
                }
            }
            "$Elements" => {
                let n: usize = lines
                    .expect("element count")?
                    .parse()
                    .map_err(|_| lines.err("invalid element count"))?;
                for _ in 0..n {
                    let l = lines.expect("element")?;
                    let v: Vec<usize> = lines.numbers(l, 3)?;
                    let (etype, ntags) = (v[1], v[2]);
                    if etype != 4 {
                        continue;
                    }
                    let nodes = v.get(3 + ntags..3 + ntags + 4).ok_or_else(|| lines.err("truncated tetrahedron"))?;
                    let mut ids = [0usize; 4];
                    for (k, n) in nodes.iter().enumerate() {
                        ids[k] = *node_index
                            .get(n)
                            .ok_or_else(|| lines.err(format!("unknown node {n}")))?;
                    }
                    tets.push(ids);
                    tet_lines.push(lines.line);
                }
                if lines.expect("$EndElements")? != "$EndElements" {
                    return Err(lines.err("expected $EndElements"));
                }
            }
            other if other.starts_with('$') => {
                // skip unknown sections
                let end = format!("$End{}", &other[1..]);
                while let Some(l) = lines.next() {
                    if l == end {
                        break;
                    }
                }
            }
            _ => return Err(lines.err(format!("unexpected line '{l}'"))),
        }
    }
    if !saw_format {
        return Err(lines.err("missing $MeshFormat section"));
    }
    if tets.is_empty() {
        return Err(lines.err("mesh contains no tetrahedra"));
    }
    StraightMesh::from_raw(coords, tets, ExactGeometry::Identity)
        .map_err(|e| topology_with_line(e, &tet_lines, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_TET: &str = "tetmesh 1\nvertices 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\ntets 1\n0 1 2 3\n";

    #[test]
    fn reads_single_tet() {
        let m = parse_tetmesh(ONE_TET, Path::new("one.tet")).unwrap();
        assert_eq!(m.num_elements(), 1);
        assert_eq!(m.num_boundary_faces(), 4);
        assert_eq!(m.num_interior_faces(), 0);
    }

    #[test]
    fn reads_two_tets_with_geometry() {
        let text = "tetmesh 1\nvertices 5\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1 1 1\ntets 2\n0 1 2 3\n1 2 3 4\nboundary_geometry sphere 0 0 0 2\n";
        let m = parse_tetmesh(text, Path::new("two.tet")).unwrap();
        assert_eq!(m.num_interior_faces(), 1);
        assert_eq!(m.num_boundary_faces(), 6);
        assert!(matches!(m.geometry, ExactGeometry::Sphere { radius, .. } if radius == 2.0));
    }

    #[test]
    fn malformed_input_reports_line() {
        let text = "tetmesh 1\nvertices 2\n0 0 0\n1 x 0\n";
        match parse_tetmesh(text, Path::new("bad.tet")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverted_element_reports_line() {
        let text = "tetmesh 1\nvertices 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\ntets 1\n1 0 2 3\n";
        match parse_tetmesh(text, Path::new("inv.tet")) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 8);
                assert!(msg.contains("inverted"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gmsh_subset() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n$Elements\n2\n1 2 2 0 1 1 2 3\n2 4 2 0 1 1 2 3 4\n$EndElements\n";
        let m = parse_gmsh(text, Path::new("a.msh")).unwrap();
        assert_eq!(m.num_elements(), 1);
    }

    #[test]
    fn writer_round_trips() {
        let m = parse_tetmesh(ONE_TET, Path::new("one.tet")).unwrap();
        let again = parse_tetmesh(&write_tetmesh(&m), Path::new("again.tet")).unwrap();
        assert_eq!(again.tets, m.tets);
    }
}
