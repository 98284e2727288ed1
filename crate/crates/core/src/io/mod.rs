//! File formats, config files and run manifests.

mod config_file;
mod manifest;
mod obj;
mod ply;
mod xyz;

use std::path::Path;

pub use config_file::{parse_config, read_config};
pub use manifest::{write_atomic, RunManifest};
pub use obj::{read_obj, write_obj};
pub use ply::{read_ply_cloud, read_ply_mesh, write_ply_cloud, write_ply_mesh};
pub use xyz::{read_xyz, write_xyz};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh};

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Reads `.xyz` or `.ply`. Empty clouds are rejected.
pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let cloud = match extension(path).as_str() {
        "xyz" => read_xyz(path)?,
        "ply" => read_ply_cloud(path)?,
        other => return Err(Error::Format(format!("point cloud extension `{other}`"))),
    };
    if cloud.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: 0,
            msg: "no points".into(),
        });
    }
    Ok(cloud)
}

/// Writes `.xyz` (ASCII) or `.ply` (binary little-endian).
pub fn write_point_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    match extension(path).as_str() {
        "xyz" => write_xyz(cloud, path),
        "ply" => write_ply_cloud(cloud, path),
        other => Err(Error::Format(format!("point cloud extension `{other}`"))),
    }
}

/// Reads `.obj` or `.ply`; polygons are fan-triangulated.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    match extension(path).as_str() {
        "obj" => read_obj(path),
        "ply" => read_ply_mesh(path),
        other => Err(Error::Format(format!("mesh extension `{other}`"))),
    }
}

/// Writes `.obj` or `.ply` (binary little-endian).
pub fn write_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    match extension(path).as_str() {
        "obj" => write_obj(mesh, path),
        "ply" => write_ply_mesh(mesh, path),
        other => Err(Error::Format(format!("mesh extension `{other}`"))),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        msg: msg.into(),
    }
}

/// Rescales normals read from a file to unit length.
fn unit_normals(path: &Path, normals: Vec<[f64; 3]>) -> Result<Vec<[f64; 3]>> {
    normals
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            crate::geometry::vec3::normalized(n)
                .ok_or_else(|| parse_error(path, 0, format!("normal {i} has zero length")))
        })
        .collect()
}
