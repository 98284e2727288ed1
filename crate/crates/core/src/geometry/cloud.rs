use super::Point3;
use crate::error::{Error, Result};

/// Ordered list of 3D positions with optional unit normals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Point3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud {
            points,
            normals: None,
        }
    }

    /// Builds a cloud with normals, checking lengths, finiteness and unit
    /// norm (within `1e-9`).
    pub fn with_normals(points: Vec<Point3>, normals: Vec<Point3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::invalid(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        let cloud = PointCloud {
            points,
            normals: Some(normals),
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self
            .points
            .iter()
            .position(|p| p.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::invalid(format!("point {i} is not finite")));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(Error::invalid("normal count differs from point count"));
            }
            for (i, n) in normals.iter().enumerate() {
                let len = super::vec3::norm(*n);
                if !len.is_finite() || (len - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "normal {i} is not unit length ({len})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        Some([c[0] / n, c[1] / n, c[2] / n])
    }
}

impl From<Vec<Point3>> for PointCloud {
    fn from(points: Vec<Point3>) -> Self {
        PointCloud::new(points)
    }
}
