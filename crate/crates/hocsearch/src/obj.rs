//! Wavefront OBJ subset: `v` and `f` records. Faces may carry texture and
//! normal references (ignored), use negative indices, and have more than
//! three corners (fan-triangulated). Everything else is skipped.

use std::fmt::Write as _;
use std::path::Path;

use hoc_core::{Point3, TriangleMesh};

use crate::error::{self, FormatError, Result};

pub fn to_string(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    if let Some(c) = &mesh.category {
        let _ = writeln!(out, "# category {c}");
    }
    // `{}` on f64 prints the shortest representation that parses back exactly
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

pub fn parse(path: &Path, text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let here = offset;
        offset += line.len();
        let body = line.split('#').next().unwrap_or("");
        let mut tokens = body.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let tok = tokens.next().ok_or_else(|| FormatError::parse(path, here, "vertex needs 3 coordinates"))?;
                    *c = tok.parse().map_err(|_| FormatError::parse(path, here, format!("bad coordinate '{tok}'")))?;
                }
                vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut corners = Vec::with_capacity(4);
                for tok in tokens {
                    let idx = tok.split('/').next().unwrap_or("");
                    let i: i64 = idx.parse().map_err(|_| FormatError::parse(path, here, format!("bad face index '{tok}'")))?;
                    let resolved = match i {
                        i if i > 0 => i - 1,
                        i if i < 0 => vertices.len() as i64 + i,
                        _ => return Err(FormatError::parse(path, here, "face index 0")),
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(FormatError::parse(path, here, format!("face index {i} out of range")));
                    }
                    corners.push(resolved as u32);
                }
                if corners.len() < 3 {
                    return Err(FormatError::parse(path, here, "face needs at least 3 corners"));
                }
                for w in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[w], corners[w + 1]]);
                }
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(FormatError::parse(path, text.len(), "no faces"));
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| FormatError::invalid(path, e))
}

pub fn read(path: &Path) -> Result<TriangleMesh> {
    parse(path, &error::read_text(path)?)
}

pub fn write(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    error::write(path, to_string(mesh).as_bytes())
}
