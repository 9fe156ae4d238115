use std::fmt::Write as _;
use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::body::TriangleMesh;
use crate::{Error, Result};

/// Parses `v` and `f` records; polygons are fan-triangulated, texture and
/// normal indices are ignored.
pub fn parse_obj(text: &str, source: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let bad = |why: String| Error::format(source, format!("line {}: {why}", n + 1));
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let xyz: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if xyz.len() != 3 {
                    return Err(bad("vertex needs three coordinates".into()));
                }
                vertices.push([xyz[0], xyz[1], xyz[2]]);
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|e| bad(format!("{s:?}: {e}")))?;
                        let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                        if resolved < 0 {
                            return Err(bad(format!("face index {i} out of range")));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad("face needs at least three vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let mesh = TriangleMesh::new(vertices, faces);
    mesh.validate().map_err(|e| Error::format(source, e.to_string()))?;
    Ok(mesh)
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    parse_obj(&text, &path.display().to_string())
}

/// Writes vertices with full round-trip precision.
pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    write_bytes(path, s.as_bytes())
}
