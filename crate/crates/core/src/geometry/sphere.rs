use super::{Point3, PointCloud};

/// `n` points of the Fibonacci lattice on the unit sphere.
///
/// Point `i` sits at height `1 - (2i + 1)/n` and longitude `i * golden
/// angle`; the result is deterministic in `n`.
pub fn fibonacci_sphere(n: usize) -> PointCloud {
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let points = (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            let p: Point3 = [r * phi.cos(), r * phi.sin(), z];
            let len = super::vec3::norm(p);
            super::vec3::scale(p, 1.0 / len)
        })
        .collect();
    PointCloud::new(points)
}
