use super::vec3::{add, dist2, dot, scale, sub};
use super::{KdTree, Point3, TriangleMesh};

/// Squared distance from `p` to the closest point of triangle `abc`.
pub fn point_triangle_distance2(p: Point3, a: Point3, b: Point3, c: Point3) -> f64 {
    dist2(p, closest_point_on_triangle(p, a, b, c))
}

// Voronoi-region walk over the vertices, edges and face of the triangle.
fn closest_point_on_triangle(p: Point3, a: Point3, b: Point3, c: Point3) -> Point3 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return add(a, scale(ab, v));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return add(a, scale(ac, w));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return add(b, scale(sub(c, b), w));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    add(a, add(scale(ab, v), scale(ac, w)))
}

/// Exact point-to-mesh distance queries.
///
/// Triangles are indexed by centroid. If the nearest centroid is at distance
/// `d`, the closest triangle lies at most `d` away, so its centroid is within
/// `d + R` where `R` bounds every centroid-to-corner distance.
#[derive(Clone, Debug)]
pub struct MeshDistance {
    mesh: TriangleMesh,
    centroids: KdTree,
    reach: f64,
}

impl MeshDistance {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let centroids: Vec<Point3> = (0..mesh.triangles.len())
            .map(|t| mesh.centroid(t))
            .collect();
        let reach = centroids
            .iter()
            .enumerate()
            .flat_map(|(t, &c)| mesh.corners(t).map(|v| dist2(c, v)))
            .fold(0.0f64, f64::max)
            .sqrt();
        MeshDistance {
            mesh: mesh.clone(),
            centroids: KdTree::new(&centroids),
            reach,
        }
    }

    /// Distance from `p` to the mesh surface; `None` for an empty mesh.
    pub fn distance(&self, p: Point3) -> Option<f64> {
        let (_, d2) = self.centroids.nearest(p)?;
        let radius = d2.sqrt() + self.reach;
        let best = self
            .centroids
            .within_radius(p, radius * (1.0 + 1e-12) + 1e-15)
            .into_iter()
            .map(|t| {
                let [a, b, c] = self.mesh.corners(t);
                point_triangle_distance2(p, a, b, c)
            })
            .fold(f64::INFINITY, f64::min);
        Some(best.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Point3 = [0.0, 0.0, 0.0];
    const B: Point3 = [1.0, 0.0, 0.0];
    const C: Point3 = [0.0, 1.0, 0.0];

    #[test]
    fn regions() {
        assert_eq!(point_triangle_distance2([0.2, 0.2, 2.0], A, B, C), 4.0);
        assert_eq!(point_triangle_distance2([-1.0, -1.0, 0.0], A, B, C), 2.0);
        assert_eq!(point_triangle_distance2([0.5, -2.0, 0.0], A, B, C), 4.0);
        assert!((point_triangle_distance2([1.0, 1.0, 0.0], A, B, C) - 0.5).abs() < 1e-15);
        assert_eq!(point_triangle_distance2([3.0, 0.0, 0.0], A, B, C), 4.0);
    }

    #[test]
    fn cube_distances() {
        let md = MeshDistance::new(&TriangleMesh::unit_cube());
        assert!((md.distance([0.0, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((md.distance([1.5, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        let corner = md.distance([1.5, 1.5, 1.5]).unwrap();
        assert!((corner - 3f64.sqrt()).abs() < 1e-12);
    }
}
