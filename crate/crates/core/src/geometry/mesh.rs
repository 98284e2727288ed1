use std::collections::HashMap;

use super::vec3::{add, cross, norm, scale, sub};
use super::Point3;
use crate::error::{Error, Result};

/// Indexed triangle mesh. Face normals follow the right-hand rule.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Checks that indices are in range, no triangle repeats a vertex and
    /// every coordinate is finite.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            triangles,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| v.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::invalid(format!("vertex {i} is not finite")));
        }
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::invalid(format!(
                    "triangle {t} references a vertex out of range ({n} vertices)"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::invalid(format!("triangle {t} repeats a vertex")));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalised normal `(b - a) x (c - a)`; its length is twice the area.
    pub fn face_cross(&self, t: usize) -> Point3 {
        let [a, b, c] = self.corners(t);
        cross(sub(b, a), sub(c, a))
    }

    /// Unit face normal, or zero for a degenerate triangle.
    pub fn face_normal(&self, t: usize) -> Point3 {
        let n = self.face_cross(t);
        let len = norm(n);
        if len > 0.0 {
            scale(n, 1.0 / len)
        } else {
            [0.0; 3]
        }
    }

    pub fn face_normals(&self) -> Vec<Point3> {
        (0..self.triangles.len())
            .map(|t| self.face_normal(t))
            .collect()
    }

    pub fn area(&self, t: usize) -> f64 {
        0.5 * norm(self.face_cross(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point3 {
        let [a, b, c] = self.corners(t);
        scale(add(add(a, b), c), 1.0 / 3.0)
    }

    /// Number of triangles incident to each undirected edge.
    pub fn edge_incidence(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        !self.triangles.is_empty() && self.edge_incidence().values().all(|&c| c == 2)
    }

    /// Triangle count of each edge-connected component, largest first.
    pub fn component_sizes(&self) -> Vec<usize> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for t in &self.triangles {
            for k in 1..3 {
                let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut counts = std::collections::BTreeMap::new();
        for t in &self.triangles {
            *counts.entry(find(&mut parent, t[0])).or_insert(0usize) += 1;
        }
        let mut sizes: Vec<usize> = counts.into_values().collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }

    /// Same surface with every triangle's winding reversed.
    pub fn flipped(&self) -> Self {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Signed volume enclosed by a closed, consistently oriented mesh.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                super::vec3::dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Axis-aligned unit cube `[-0.5, 0.5]^3`, outward-facing.
    pub fn unit_cube() -> Self {
        let vertices = (0..8)
            .map(|i| {
                [
                    if i & 1 == 0 { -0.5 } else { 0.5 },
                    if i & 2 == 0 { -0.5 } else { 0.5 },
                    if i & 4 == 0 { -0.5 } else { 0.5 },
                ]
            })
            .collect();
        let triangles = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        TriangleMesh {
            vertices,
            triangles,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(TriangleMesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 1]]).is_err());
        assert!(TriangleMesh::new(vec![[f64::NAN, 0.0, 0.0]], vec![]).is_err());
    }

    #[test]
    fn cube_is_closed_and_outward() {
        let cube = TriangleMesh::unit_cube();
        cube.validate().unwrap();
        assert!(cube.is_closed());
        assert!((cube.total_area() - 6.0).abs() < 1e-12);
        assert!((cube.signed_volume() - 1.0).abs() < 1e-12);
        for t in 0..12 {
            let n = cube.face_normal(t);
            let c = cube.centroid(t);
            assert!(super::super::vec3::dot(n, c) > 0.0);
        }
        assert!((cube.flipped().signed_volume() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn open_triangle_not_closed() {
        let m = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(!m.is_closed());
        assert_eq!(m.face_normal(0), [0.0, 0.0, 1.0]);
        assert_eq!(m.area(0), 0.5);
    }
}
