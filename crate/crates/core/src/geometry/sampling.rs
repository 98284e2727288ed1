use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use super::{Point3, PointCloud, TriangleMesh};
use crate::error::{Error, Result};

/// A point on a mesh, kept as barycentric weights of its triangle so it can
/// be re-evaluated after the mesh vertices move.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample {
    pub triangle: usize,
    pub weights: [f64; 3],
}

impl SurfaceSample {
    pub fn position(&self, mesh: &TriangleMesh) -> Point3 {
        let [a, b, c] = mesh.corners(self.triangle);
        let w = self.weights;
        [
            w[0] * a[0] + w[1] * b[0] + w[2] * c[0],
            w[0] * a[1] + w[1] * b[1] + w[2] * c[1],
            w[0] * a[2] + w[1] * b[2] + w[2] * c[2],
        ]
    }
}

/// Draws `n` area-weighted samples as (triangle, barycentric weights).
pub fn sample_mesh_barycentric(
    mesh: &TriangleMesh,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<SurfaceSample>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.area(t)).collect();
    let picker = WeightedIndex::new(&areas)
        .map_err(|_| Error::invalid("mesh has no triangle with positive area"))?;
    Ok((0..n)
        .map(|_| {
            let triangle = picker.sample(rng);
            let r1: f64 = rng.gen();
            let r2: f64 = rng.gen();
            let s = r1.sqrt();
            SurfaceSample {
                triangle,
                weights: [1.0 - s, s * (1.0 - r2), s * r2],
            }
        })
        .collect())
}

/// `n` area-weighted points on the mesh, optionally with face normals.
pub fn sample_mesh_surface(
    mesh: &TriangleMesh,
    n: usize,
    with_normals: bool,
    rng: &mut impl Rng,
) -> Result<PointCloud> {
    let samples = sample_mesh_barycentric(mesh, n, rng)?;
    let points = samples.iter().map(|s| s.position(mesh)).collect();
    let normals = with_normals.then(|| {
        samples
            .iter()
            .map(|s| mesh.face_normal(s.triangle))
            .collect()
    });
    Ok(PointCloud { points, normals })
}
