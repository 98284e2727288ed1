use crate::error::Result;
use crate::geometry::vec3::{norm, scale, sub};
use crate::geometry::Point3;

/// A signed distance field that can be sampled in bulk together with its
/// spatial gradient.
pub trait ScalarField {
    fn eval(&self, points: &[Point3]) -> Result<(Vec<f64>, Vec<Point3>)>;

    fn values(&self, points: &[Point3]) -> Result<Vec<f64>> {
        Ok(self.eval(points)?.0)
    }
}

/// `|x - center| - radius`. At the centre the gradient is taken as `+z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereSdf {
    pub center: Point3,
    pub radius: f64,
}

impl SphereSdf {
    pub fn new(radius: f64) -> Self {
        SphereSdf {
            center: [0.0; 3],
            radius,
        }
    }
}

impl ScalarField for SphereSdf {
    fn eval(&self, points: &[Point3]) -> Result<(Vec<f64>, Vec<Point3>)> {
        Ok(points
            .iter()
            .map(|&p| {
                let d = sub(p, self.center);
                let n = norm(d);
                // every direction is a closest-point direction at the centre
                let g = if n > 0.0 {
                    scale(d, 1.0 / n)
                } else {
                    [0.0, 0.0, 1.0]
                };
                (n - self.radius, g)
            })
            .unzip())
    }
}

/// `normal . x - offset` for a unit `normal`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneSdf {
    pub normal: Point3,
    pub offset: f64,
}

impl ScalarField for PlaneSdf {
    fn eval(&self, points: &[Point3]) -> Result<(Vec<f64>, Vec<Point3>)> {
        Ok(points
            .iter()
            .map(|&p| {
                (
                    crate::geometry::vec3::dot(self.normal, p) - self.offset,
                    self.normal,
                )
            })
            .unzip())
    }
}

/// Exact distance to an origin-centred axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxSdf {
    pub half_extent: Point3,
}

impl ScalarField for BoxSdf {
    fn eval(&self, points: &[Point3]) -> Result<(Vec<f64>, Vec<Point3>)> {
        Ok(points
            .iter()
            .map(|&p| {
                let q: Point3 = std::array::from_fn(|k| p[k].abs() - self.half_extent[k]);
                let outside: Point3 = q.map(|v| v.max(0.0));
                let out_len = norm(outside);
                if out_len > 0.0 {
                    let g = std::array::from_fn(|k| outside[k] / out_len * p[k].signum());
                    (out_len, g)
                } else {
                    let axis = (0..3).max_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap_or(0);
                    let mut g = [0.0; 3];
                    g[axis] = p[axis].signum();
                    (q[axis], g)
                }
            })
            .unzip())
    }
}
