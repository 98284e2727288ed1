use std::collections::HashMap;

use crate::geometry::vec3::{add, cross, dot, scale, sub};
use crate::geometry::{Point3, TriangleMesh};

use super::grid::TetGrid;

/// Values closer to zero than this are shifted by `+SIGN_TIE` before signs
/// are read, so no vertex sits exactly on the level set.
pub const SIGN_TIE: f64 = 1e-12;

pub fn nudge(v: f64) -> f64 {
    if v.abs() < SIGN_TIE {
        v + SIGN_TIE
    } else {
        v
    }
}

/// Sign-change structure of a grid, independent of vertex positions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MtTopology {
    /// Crossing edges `[a, b]` with `a < b`, in first-seen tet order. Mesh
    /// vertex `i` lies on edge `edges[i]`.
    pub edges: Vec<[usize; 2]>,
    /// Triangles over mesh vertex (edge) indices, facing positive values.
    pub triangles: Vec<[usize; 3]>,
}

impl MtTopology {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Sorted grid vertices touched by a crossing edge.
    pub fn active_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.edges.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Finds the crossing edges and triangles of every tetrahedron.
///
/// `values` are the per-vertex field values (ties nudged with [`nudge`]).
/// Orientation uses the undeformed grid positions: a triangle is flipped if
/// its normal points from the positive to the negative corners.
pub fn mt_topology(grid: &TetGrid, values: &[f64]) -> MtTopology {
    let positive: Vec<bool> = values.iter().map(|&v| nudge(v) > 0.0).collect();
    let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
    let mut topo = MtTopology::default();
    for tet in &grid.tets {
        let count = tet.iter().filter(|&&i| positive[i]).count();
        if count == 0 || count == 4 {
            continue;
        }
        let mut edge = |a: usize, b: usize| {
            let key = [a.min(b), a.max(b)];
            *edge_ids.entry(key).or_insert_with(|| {
                topo.edges.push(key);
                topo.edges.len() - 1
            })
        };
        let (pos, neg): (Vec<usize>, Vec<usize>) = tet.iter().partition(|&&i| positive[i]);
        let mut tris: Vec<[[usize; 2]; 3]> = Vec::with_capacity(2);
        match count {
            1 | 3 => {
                let (lone, rest) = if count == 1 {
                    (pos[0], &neg)
                } else {
                    (neg[0], &pos)
                };
                tris.push([[lone, rest[0]], [lone, rest[1]], [lone, rest[2]]]);
            }
            _ => {
                let (a, b, c, d) = (pos[0], pos[1], neg[0], neg[1]);
                // quad cycle ac -> ad -> bd -> bc; the diagonal is chosen from
                // vertex ids only, so negating the field keeps it
                let s = *tet.iter().min().expect("four corners");
                let partner = if pos.contains(&s) { c.min(d) } else { a.min(b) };
                let diag_ac_bd = [s, partner] == [a, c]
                    || [s, partner] == [c, a]
                    || [s, partner] == [b, d]
                    || [s, partner] == [d, b];
                if diag_ac_bd {
                    tris.push([[a, c], [a, d], [b, d]]);
                    tris.push([[a, c], [b, d], [b, c]]);
                } else {
                    tris.push([[a, d], [b, d], [b, c]]);
                    tris.push([[a, d], [b, c], [a, c]]);
                }
            }
        }
        let centroid = |ids: &[usize]| {
            let s = ids
                .iter()
                .fold([0.0; 3], |acc, &i| add(acc, grid.vertices[i]));
            scale(s, 1.0 / ids.len() as f64)
        };
        let toward_positive = sub(centroid(&pos), centroid(&neg));
        // register edges and emit triangles in an order that does not depend
        // on which side is positive
        let mut keys: Vec<[usize; 2]> = tris
            .iter()
            .flatten()
            .map(|&[a, b]| [a.min(b), a.max(b)])
            .collect();
        keys.sort_unstable();
        keys.dedup();
        for [a, b] in keys {
            edge(a, b);
        }
        let mut out: Vec<[usize; 3]> = tris
            .into_iter()
            .map(|tri| {
                let mid = tri.map(|[a, b]| scale(add(grid.vertices[a], grid.vertices[b]), 0.5));
                let normal = cross(sub(mid[1], mid[0]), sub(mid[2], mid[0]));
                let [e0, e1, e2] = tri.map(|[a, b]| edge(a, b));
                let t = if dot(normal, toward_positive) >= 0.0 {
                    [e0, e1, e2]
                } else {
                    [e0, e2, e1]
                };
                let first = (0..3).min_by_key(|&i| t[i]).expect("three corners");
                [t[first], t[(first + 1) % 3], t[(first + 2) % 3]]
            })
            .collect();
        out.sort_by_key(|t| {
            let mut k = *t;
            k.sort_unstable();
            k
        });
        topo.triangles.extend(out);
    }
    topo
}

/// Zero crossing on edge `[a, b]`: `p_a + t (p_b - p_a)` with
/// `t = g_a / (g_a - g_b)`.
pub fn edge_crossing(pa: Point3, pb: Point3, ga: f64, gb: f64) -> Point3 {
    let (ga, gb) = (nudge(ga), nudge(gb));
    let t = ga / (ga - gb);
    add(pa, scale(sub(pb, pa), t))
}

/// Mesh vertex positions for `topology`.
pub fn interpolate(topology: &MtTopology, positions: &[Point3], values: &[f64]) -> Vec<Point3> {
    topology
        .edges
        .iter()
        .map(|&[a, b]| edge_crossing(positions[a], positions[b], values[a], values[b]))
        .collect()
}

/// Vertex positions and carried field values of a (possibly deformed) grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformedGrid {
    pub positions: Vec<Point3>,
    pub values: Vec<f64>,
}

/// Extraction result; `empty` is set when no tetrahedron changes sign.
#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub mesh: TriangleMesh,
    pub empty: bool,
}

/// Marching tetrahedra over `grid`'s connectivity with the positions and
/// values of `deformed`.
pub fn marching_tetrahedra(grid: &TetGrid, deformed: &DeformedGrid) -> Extraction {
    let topo = mt_topology(grid, &deformed.values);
    if topo.is_empty() {
        log::warn!("marching tetrahedra: no sign change, empty mesh");
    }
    let vertices = interpolate(&topo, &deformed.positions, &deformed.values);
    Extraction {
        empty: topo.is_empty(),
        mesh: TriangleMesh {
            vertices,
            triangles: topo.triangles,
        },
    }
}
