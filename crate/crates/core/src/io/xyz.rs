use std::fmt::Write as _;
use std::path::Path;

use super::{parse_error, read_text, unit_normals, write_bytes};
use crate::error::Result;
use crate::geometry::PointCloud;

/// Whitespace-separated `x y z` or `x y z nx ny nz` per line; `#` starts a
/// comment. Every data line must have the same column count.
pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let text = read_text(path)?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_error(path, i + 1, format!("bad number `{t}`")))
            })
            .collect::<Result<_>>()?;
        if values.len() != 3 && values.len() != 6 {
            return Err(parse_error(
                path,
                i + 1,
                format!("expected 3 or 6 values, found {}", values.len()),
            ));
        }
        match columns {
            None => columns = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(parse_error(
                    path,
                    i + 1,
                    format!("expected {c} values like earlier lines"),
                ));
            }
            _ => {}
        }
        points.push([values[0], values[1], values[2]]);
        if values.len() == 6 {
            normals.push([values[3], values[4], values[5]]);
        }
    }
    let normals = (columns == Some(6))
        .then(|| unit_normals(path, normals))
        .transpose()?;
    Ok(PointCloud { points, normals })
}

/// Shortest round-trip decimal representation, so reading back is exact.
pub fn write_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, p) in cloud.points.iter().enumerate() {
        write!(out, "{:?} {:?} {:?}", p[0], p[1], p[2]).expect("write to string");
        if let Some(n) = &cloud.normals {
            write!(out, " {:?} {:?} {:?}", n[i][0], n[i][1], n[i][2]).expect("write to string");
        }
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}
