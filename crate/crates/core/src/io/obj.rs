use std::fmt::Write as _;
use std::path::Path;

use super::{parse_error, read_text, write_bytes};
use crate::error::Result;
use crate::geometry::TriangleMesh;

/// `v` and `f` records with 1-based indices.
pub fn write_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut out = String::new();
    for v in &mesh.vertices {
        writeln!(out, "v {:?} {:?} {:?}", v[0], v[1], v[2]).expect("write to string");
    }
    for t in &mesh.triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("write to string");
    }
    write_bytes(path, out.as_bytes())
}

/// Reads `v` and `f` records; other records are ignored. Face entries may
/// use the `i/t/n` form and negative (relative) indices.
pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let text = read_text(path)?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let c: Vec<f64> = tokens
                    .take(3)
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| parse_error(path, i + 1, format!("bad coordinate `{t}`")))
                    })
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(parse_error(path, i + 1, "vertex needs three coordinates"));
                }
                vertices.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = tokens
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let v: i64 = first.parse().map_err(|_| {
                            parse_error(path, i + 1, format!("bad face index `{t}`"))
                        })?;
                        let resolved = if v < 0 {
                            vertices.len() as i64 + v
                        } else {
                            v - 1
                        };
                        if resolved < 0 || resolved >= vertices.len() as i64 {
                            return Err(parse_error(
                                path,
                                i + 1,
                                format!("face index {v} out of range"),
                            ));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(parse_error(
                        path,
                        i + 1,
                        "face needs at least three vertices",
                    ));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| parse_error(path, 0, e.to_string()))
}
