use crate::error::{Error, Result};
use crate::geometry::vec3::{cross, dot, sub};
use crate::geometry::Point3;

pub const MAX_RESOLUTION: usize = 128;

/// Conforming tetrahedral grid over `[-0.5, 0.5]^3`.
///
/// Every cube cell is split into six tetrahedra around its main diagonal
/// (Kuhn/Freudenthal split). The split is the same in every cell, so
/// neighbouring cells share faces exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TetGrid {
    pub resolution: usize,
    pub vertices: Vec<Point3>,
    /// Positively oriented index 4-tuples.
    pub tets: Vec<[usize; 4]>,
}

/// Six vertex paths from corner 0 to corner 7 of a cell, as corner bitmasks
/// (bit 0 = x, bit 1 = y, bit 2 = z).
const KUHN: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Signed volume of the tetrahedron `abcd`.
pub fn tet_volume(a: Point3, b: Point3, c: Point3, d: Point3) -> f64 {
    dot(sub(b, a), cross(sub(c, a), sub(d, a))) / 6.0
}

impl TetGrid {
    /// `(r + 1)^3` vertices and `6 r^3` tetrahedra. `r` must lie in
    /// `1..=128`.
    pub fn new(resolution: usize) -> Result<Self> {
        let r = resolution;
        if !(1..=MAX_RESOLUTION).contains(&r) {
            return Err(Error::invalid(format!(
                "grid resolution {r} outside 1..={MAX_RESOLUTION}"
            )));
        }
        let n = r + 1;
        let coord = |i: usize| i as f64 / r as f64 - 0.5;
        let mut vertices = Vec::with_capacity(n * n * n);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    vertices.push([coord(x), coord(y), coord(z)]);
                }
            }
        }
        let index = |x: usize, y: usize, z: usize| (z * n + y) * n + x;
        let mut tets = Vec::with_capacity(6 * r * r * r);
        for z in 0..r {
            for y in 0..r {
                for x in 0..r {
                    let corner = |m: usize| index(x + (m & 1), y + (m >> 1 & 1), z + (m >> 2 & 1));
                    for path in KUHN {
                        let mut t = path.map(corner);
                        let v = t.map(|i| vertices[i]);
                        if tet_volume(v[0], v[1], v[2], v[3]) < 0.0 {
                            t.swap(1, 2);
                        }
                        tets.push(t);
                    }
                }
            }
        }
        Ok(TetGrid {
            resolution: r,
            vertices,
            tets,
        })
    }

    pub fn volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tets[t].map(|i| self.vertices[i]);
        tet_volume(a, b, c, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn counts_and_volume() {
        for r in [1, 2, 3, 5] {
            let g = TetGrid::new(r).unwrap();
            assert_eq!(g.vertices.len(), (r + 1).pow(3));
            assert_eq!(g.tets.len(), 6 * r.pow(3));
            let total: f64 = (0..g.tets.len()).map(|t| g.volume(t)).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!((0..g.tets.len()).all(|t| g.volume(t) > 0.0));
        }
        assert!(TetGrid::new(0).is_err());
        assert!(TetGrid::new(129).is_err());
    }

    #[test]
    fn faces_are_shared_exactly() {
        let g = TetGrid::new(2).unwrap();
        let mut faces: HashMap<[usize; 3], usize> = HashMap::new();
        for t in &g.tets {
            for skip in 0..4 {
                let mut f: Vec<usize> = (0..4).filter(|&i| i != skip).map(|i| t[i]).collect();
                f.sort_unstable();
                *faces.entry([f[0], f[1], f[2]]).or_insert(0) += 1;
            }
        }
        for (f, count) in faces {
            let on_boundary = (0..3).any(|axis| {
                let c = g.vertices[f[0]][axis];
                c.abs() == 0.5 && f.iter().all(|&i| g.vertices[i][axis] == c)
            });
            assert_eq!(count, if on_boundary { 1 } else { 2 }, "face {f:?}");
        }
    }
}
