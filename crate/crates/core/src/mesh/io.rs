//! ASCII OFF and OBJ ingest/export (triangles only).
//!
//! Loaded meshes take their metric from the vertex positions. Meshes that
//! carry intrinsic lengths (flat tori, surgery outputs) export their
//! cosmetic embedding only.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Point3, TriangleMesh};
use crate::error::{Error, MeshError, Result};

/// Upper bound on element counts announced by a header; larger files are
/// rejected before any allocation.
const MAX_ELEMENTS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("off") => Ok(MeshFormat::Off),
            Some("obj") => Ok(MeshFormat::Obj),
            _ => Err(Error::InvalidArgument(format!(
                "cannot infer mesh format from {}",
                path.display()
            ))),
        }
    }
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)?;
    let text = fs::read_to_string(path)?;
    match format {
        MeshFormat::Off => parse_off(&text),
        MeshFormat::Obj => parse_obj(&text),
    }
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match MeshFormat::from_path(path)? {
        MeshFormat::Off => write_off(mesh),
        MeshFormat::Obj => write_obj(mesh),
    };
    fs::write(path, text)?;
    Ok(())
}

/// Significant lines of an OFF file with their 1-based line numbers.
fn off_tokens(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        let toks: Vec<&str> = line.split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse::<T>()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{tok}'")))
}

fn parse_coord(tok: &str, line: usize) -> Result<f64> {
    let x: f64 = parse_num(tok, line, "coordinate")?;
    if !x.is_finite() {
        return Err(Error::parse(line, format!("non-finite coordinate '{tok}'")));
    }
    Ok(x)
}

pub fn parse_off(text: &str) -> Result<TriangleMesh> {
    let (positions, faces) = read_off(text)?;
    TriangleMesh::new(positions, faces)
}

fn read_off(text: &str) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    let mut lines = off_tokens(text);
    let (line, header) = lines.next().ok_or_else(|| Error::parse(1, "empty OFF file"))?;
    if header[0] != "OFF" {
        return Err(Error::parse(line, format!("expected 'OFF', found '{}'", header[0])));
    }
    // The counts may share the header line.
    let (line, counts) = if header.len() > 1 {
        (line, header[1..].to_vec())
    } else {
        lines
            .next()
            .ok_or_else(|| Error::parse(line + 1, "missing vertex/face counts"))?
    };
    if counts.len() < 2 {
        return Err(Error::parse(line, "expected 'V F E' counts"));
    }
    let nv: usize = parse_num(counts[0], line, "vertex count")?;
    let nf: usize = parse_num(counts[1], line, "face count")?;
    if nv > MAX_ELEMENTS || nf > MAX_ELEMENTS {
        return Err(Error::ResourceLimit(format!(
            "OFF header announces {nv} vertices and {nf} faces"
        )));
    }

    let mut positions = Vec::with_capacity(nv.min(1 << 16));
    for _ in 0..nv {
        let (line, toks) = lines
            .next()
            .ok_or_else(|| Error::parse(line, "unexpected end of file in vertex list"))?;
        if toks.len() < 3 {
            return Err(Error::parse(line, "vertex needs three coordinates"));
        }
        positions.push([
            parse_coord(toks[0], line)?,
            parse_coord(toks[1], line)?,
            parse_coord(toks[2], line)?,
        ]);
    }
    let mut faces = Vec::with_capacity(nf.min(1 << 16));
    for f in 0..nf {
        let (line, toks) = lines
            .next()
            .ok_or_else(|| Error::parse(line, "unexpected end of file in face list"))?;
        let arity: usize = parse_num(toks[0], line, "face arity")?;
        if arity != 3 {
            return Err(MeshError::NonTriangleFace { face: f, arity }.into());
        }
        if toks.len() < 4 {
            return Err(Error::parse(line, "face lists fewer than three indices"));
        }
        let mut face = [0usize; 3];
        for k in 0..3 {
            let idx: usize = parse_num(toks[k + 1], line, "vertex index")?;
            if idx >= nv {
                return Err(MeshError::IndexOutOfRange {
                    face: f,
                    index: idx,
                    count: nv,
                }
                .into());
            }
            face[k] = idx;
        }
        faces.push(face);
    }
    Ok((positions, faces))
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let (positions, faces) = read_obj(text)?;
    TriangleMesh::new(positions, faces)
}

fn read_obj(text: &str) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks.first().copied() {
            Some("v") => {
                if toks.len() < 4 {
                    return Err(Error::parse(line, "vertex needs three coordinates"));
                }
                positions.push([
                    parse_coord(toks[1], line)?,
                    parse_coord(toks[2], line)?,
                    parse_coord(toks[3], line)?,
                ]);
            }
            Some("f") => {
                let arity = toks.len() - 1;
                if arity != 3 {
                    return Err(MeshError::NonTriangleFace {
                        face: faces.len(),
                        arity,
                    }
                    .into());
                }
                let mut face = [0usize; 3];
                for k in 0..3 {
                    let first = toks[k + 1].split('/').next().unwrap_or("");
                    let idx: i64 = parse_num(first, line, "vertex index")?;
                    let n = positions.len() as i64;
                    let resolved = if idx > 0 { idx - 1 } else { n + idx };
                    if idx == 0 || resolved < 0 || resolved >= n {
                        return Err(MeshError::IndexOutOfRange {
                            face: faces.len(),
                            index: idx.unsigned_abs() as usize,
                            count: positions.len(),
                        }
                        .into());
                    }
                    face[k] = resolved as usize;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Ok((positions, faces))
}

pub fn write_off(mesh: &TriangleMesh) -> String {
    let mut out = String::with_capacity(64 * (mesh.num_vertices() + mesh.num_faces()));
    let _ = writeln!(out, "OFF");
    let _ = writeln!(out, "{} {} {}", mesh.num_vertices(), mesh.num_faces(), mesh.num_edges());
    for p in mesh.positions() {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::with_capacity(64 * (mesh.num_vertices() + mesh.num_faces()));
    for p in mesh.positions() {
        let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_icosphere;

    const ICOSAHEDRON_OFF: &str = include_str!("../../tests/data/icosahedron.off");

    #[test]
    fn icosahedron_off_has_twelve_vertices() {
        let m = parse_off(ICOSAHEDRON_OFF).unwrap();
        assert_eq!(m.num_vertices(), 12);
        assert_eq!(m.num_faces(), 20);
        assert_eq!(m.genus(), 0);
    }

    #[test]
    fn holed_mesh_reports_boundary_edge() {
        let text = include_str!("../../tests/data/icosahedron_hole.off");
        let err = parse_off(text).unwrap_err();
        assert!(matches!(err, Error::Mesh(MeshError::BoundaryEdge { .. })), "{err}");
    }

    #[test]
    fn quad_face_is_rejected() {
        let text = "OFF\n4 1 4\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let err = parse_off(text).unwrap_err();
        assert!(matches!(
            err,
            Error::Mesh(MeshError::NonTriangleFace { face: 0, arity: 4 })
        ));
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap_err();
        assert!(matches!(err, Error::Mesh(MeshError::NonTriangleFace { .. })));
    }

    #[test]
    fn header_counts_on_one_line_and_comments() {
        let body: String = ICOSAHEDRON_OFF.lines().skip(2).collect::<Vec<_>>().join("\n");
        let text = format!("# comment\nOFF 12 20 30\n{body}\n");
        assert_eq!(parse_off(&text).unwrap().num_vertices(), 12);
    }

    #[test]
    fn malformed_inputs_are_parse_errors() {
        for text in [
            "",
            "PLY\n",
            "OFF\n3\n",
            "OFF\n1 0 0\n0 0\n",
            "OFF\n1 1 0\n0 0 nan\n3 0 0 0\n",
        ] {
            assert!(parse_off(text).is_err(), "{text:?}");
        }
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
        assert!(parse_obj("f 0 1 2\n").is_err());
    }

    #[test]
    fn obj_round_trip_and_slash_indices() {
        let m = build_icosphere(1).unwrap();
        let text = write_obj(&m);
        let back = parse_obj(&text).unwrap();
        assert_eq!(back.faces(), m.faces());
        let slashed = "v 0 0 1\nv 0 1 -1\nv 1 -1 -1\nv -1 -1 -1\nf 1/1/1 2//2 3\nf 1 4 2\nf 1 3 4\nf -3 -1 -2\n";
        let tet = parse_obj(slashed).unwrap();
        assert_eq!(tet.genus(), 0);
    }

    #[test]
    fn save_and_load_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_icosphere(2).unwrap();
        for name in ["a.off", "a.obj"] {
            let path = dir.path().join(name);
            save_mesh(&m, &path).unwrap();
            let back = load_mesh(&path).unwrap();
            assert_eq!(back.faces(), m.faces());
            for (p, q) in back.positions().iter().zip(m.positions()) {
                for k in 0..3 {
                    assert!((p[k] - q[k]).abs() <= 1e-12 * q[k].abs().max(1e-300));
                }
            }
        }
        assert!(save_mesh(&m, dir.path().join("a.stl")).is_err());
    }
}
