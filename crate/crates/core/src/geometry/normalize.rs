use super::{Point3, PointCloud};
use crate::error::{Error, Result};

/// Largest absolute coordinate after normalisation; keeps shapes inside the
/// `[-0.5, 0.5]^3` grid domain with a margin.
pub const NORMALIZED_HALF_EXTENT: f64 = 0.45;

/// Similarity transform `p -> (p - center) * scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitCubeTransform {
    pub center: Point3,
    pub scale: f64,
}

impl UnitCubeTransform {
    pub fn identity() -> Self {
        UnitCubeTransform {
            center: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        [
            (p[0] - self.center[0]) * self.scale,
            (p[1] - self.center[1]) * self.scale,
            (p[2] - self.center[2]) * self.scale,
        ]
    }

    pub fn invert(&self, p: Point3) -> Point3 {
        [
            p[0] / self.scale + self.center[0],
            p[1] / self.scale + self.center[1],
            p[2] / self.scale + self.center[2],
        ]
    }
}

/// Centres the cloud on its centroid and scales the largest absolute
/// coordinate to [`NORMALIZED_HALF_EXTENT`]. Normals are unchanged.
pub fn normalize_unit_cube(cloud: &PointCloud) -> Result<(PointCloud, UnitCubeTransform)> {
    let center = cloud
        .centroid()
        .ok_or(Error::Empty("normalize_unit_cube input"))?;
    let extent = cloud
        .points
        .iter()
        .flat_map(|p| (0..3).map(move |k| (p[k] - center[k]).abs()))
        .fold(0.0f64, f64::max);
    if extent.is_nan() || extent <= 0.0 {
        return Err(Error::invalid(
            "cannot normalise a cloud of identical points",
        ));
    }
    let transform = UnitCubeTransform {
        center,
        scale: NORMALIZED_HALF_EXTENT / extent,
    };
    let points = cloud.points.iter().map(|&p| transform.apply(p)).collect();
    Ok((
        PointCloud {
            points,
            normals: cloud.normals.clone(),
        },
        transform,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PointCloud {
        PointCloud::new(vec![
            [0.3, -0.1, 0.2],
            [1.7, 0.4, -0.9],
            [-0.6, 2.2, 0.1],
            [0.05, 0.5, 1.3],
        ])
    }

    #[test]
    fn centred_and_scaled() {
        let (n, _) = normalize_unit_cube(&sample()).unwrap();
        let c = n.centroid().unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-12));
        let max = n
            .points
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((max - NORMALIZED_HALF_EXTENT).abs() < 1e-15);
    }

    #[test]
    fn round_trip() {
        let cloud = sample();
        let (n, t) = normalize_unit_cube(&cloud).unwrap();
        for (p, q) in cloud.points.iter().zip(&n.points) {
            let back = t.invert(*q);
            for k in 0..3 {
                assert!((back[k] - p[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn similarity_invariant() {
        let cloud = sample();
        let moved = PointCloud::new(
            cloud
                .points
                .iter()
                .map(|p| [7.0 * p[0] + 3.0, 7.0 * p[1] - 1.0, 7.0 * p[2] + 0.5])
                .collect(),
        );
        let (a, _) = normalize_unit_cube(&cloud).unwrap();
        let (b, _) = normalize_unit_cube(&moved).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            for k in 0..3 {
                assert!((p[k] - q[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_input_gives_identity() {
        let (n, _) = normalize_unit_cube(&sample()).unwrap();
        let (_, t) = normalize_unit_cube(&n).unwrap();
        assert!(t.center.iter().all(|c| c.abs() < 1e-12));
        assert!((t.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_rejected() {
        let c = PointCloud::new(vec![[1.0, 2.0, 3.0]; 4]);
        assert!(normalize_unit_cube(&c).is_err());
    }
}
