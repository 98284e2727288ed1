use rand::Rng;

use super::deform::{deform_on_tape, OffsetNetwork};
use super::grid::TetGrid;
use super::mt::{mt_topology, MtTopology, SIGN_TIE};
use super::sdf::SdfNetwork;
use crate::bsp::chamfer_sq;
use crate::error::{Error, Result};
use crate::geometry::{sample_mesh_barycentric, Point3, TriangleMesh};
use crate::tensor::{Tape, Tensor, Var};

/// How grid vertices move before extraction.
#[derive(Clone, Copy, Debug)]
pub enum Deformation<'a> {
    /// Projection along the normalised SDF gradient.
    Gradient,
    /// Learned free offsets.
    Offset(&'a OffsetNetwork),
    /// Undeformed grid.
    Fixed,
}

/// Differentiable extraction recorded on a tape.
#[derive(Clone, Debug)]
pub struct GdoForward {
    /// `g` at every grid vertex, `[J, 1]`.
    pub values: Var,
    pub topology: MtTopology,
    /// Mesh vertices `[E, 3]`; `None` when nothing was extracted.
    pub vertices: Option<Var>,
    /// Numeric copy of the extracted mesh.
    pub mesh: TriangleMesh,
}

impl GdoForward {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_none()
    }
}

/// Evaluates `g` on the whole grid, then deforms and interpolates only the
/// vertices of sign-changing edges.
///
/// The crossing on edge `[a, b]` is `V'_a + t (V'_b - V'_a)` with
/// `t = g(V_a) / (g(V_a) - g(V_b))`: signs and weights come from the values
/// at the undeformed vertices, positions from the deformed ones.
pub fn gdo_forward(
    tape: &mut Tape,
    params: &[Var],
    net: &SdfNetwork,
    grid: &TetGrid,
    deformation: Deformation<'_>,
) -> Result<GdoForward> {
    let (values, preacts) = net.values(tape, params, &grid.vertices)?;
    let numeric = tape.value(values).data().to_vec();
    let topology = mt_topology(grid, &numeric);
    if topology.is_empty() {
        return Ok(GdoForward {
            values,
            topology,
            vertices: None,
            mesh: TriangleMesh::default(),
        });
    }
    let active = topology.active_vertices();
    let mut local = vec![usize::MAX; grid.vertices.len()];
    for (i, &v) in active.iter().enumerate() {
        local[v] = i;
    }
    let positions: Vec<Point3> = active.iter().map(|&v| grid.vertices[v]).collect();

    let g = tape.gather_rows(values, active.clone())?;
    let ties: Vec<f64> = active
        .iter()
        .map(|&v| {
            if numeric[v].abs() < SIGN_TIE {
                SIGN_TIE
            } else {
                0.0
            }
        })
        .collect();
    let g = if ties.iter().any(|&t| t != 0.0) {
        let t = tape.constant(Tensor::new(active.len(), 1, ties))?;
        tape.add(g, t)?
    } else {
        g
    };

    let moved = match deformation {
        Deformation::Gradient => {
            let grads = net.gradients(tape, params, &preacts, &active)?;
            deform_on_tape(tape, &positions, g, grads)?
        }
        Deformation::Offset(offsets) => offsets.deform_on_tape(tape, params, &positions)?,
        Deformation::Fixed => tape.constant(super::sdf::points_tensor(&positions))?,
    };

    let ia: Vec<usize> = topology.edges.iter().map(|e| local[e[0]]).collect();
    let ib: Vec<usize> = topology.edges.iter().map(|e| local[e[1]]).collect();
    let pa = tape.gather_rows(moved, ia.clone())?;
    let pb = tape.gather_rows(moved, ib.clone())?;
    let ga = tape.gather_rows(g, ia)?;
    let gb = tape.gather_rows(g, ib)?;
    let denom = tape.sub(ga, gb)?;
    let t = tape.div(ga, denom)?;
    let dir = tape.sub(pb, pa)?;
    let step = tape.mul_col(dir, t)?;
    let vertices = tape.add(pa, step)?;

    let mesh = TriangleMesh {
        vertices: tape.value(vertices).to_points(),
        triangles: topology.triangles.clone(),
    };
    Ok(GdoForward {
        values,
        topology,
        vertices: Some(vertices),
        mesh,
    })
}

/// Where the points compared against `S` come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SurfaceSamples {
    /// `T` area-weighted samples, redrawn every iteration.
    Resampled(usize),
    /// The extracted mesh vertices themselves.
    MeshVertices,
}

/// Surface points `V̄` on the tape. Resampled points are fixed barycentric
/// combinations of their triangle's corners, so gradients reach the mesh
/// vertices. Returns `None` for an empty mesh or `T = 0`.
pub fn surface_vertex_samples(
    tape: &mut Tape,
    forward: &GdoForward,
    mode: SurfaceSamples,
    rng: &mut impl Rng,
) -> Result<Option<Var>> {
    let Some(vertices) = forward.vertices else {
        return Ok(None);
    };
    let count = match mode {
        SurfaceSamples::MeshVertices => return Ok(Some(vertices)),
        SurfaceSamples::Resampled(0) => return Ok(None),
        SurfaceSamples::Resampled(t) => t,
    };
    let samples = sample_mesh_barycentric(&forward.mesh, count, rng)?;
    let mut total: Option<Var> = None;
    for corner in 0..3 {
        let idx = samples
            .iter()
            .map(|s| forward.mesh.triangles[s.triangle][corner])
            .collect();
        let w = Tensor::new(
            count,
            1,
            samples.iter().map(|s| s.weights[corner]).collect(),
        );
        let w = tape.constant(w)?;
        let p = tape.gather_rows(vertices, idx)?;
        let p = tape.mul_col(p, w)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, p)?,
            None => p,
        });
    }
    Ok(total)
}

/// Squared Chamfer distance between `V̄` and the constant target `S`.
pub fn loss_deform(tape: &mut Tape, vbar: Var, s: &[Point3]) -> Result<Var> {
    chamfer_sq(tape, vbar, s)
}

/// Mean `|g|` over the grid vertices.
pub fn loss_surf(tape: &mut Tape, values: Var) -> Result<Var> {
    if tape.shape(values)[0] == 0 {
        return Err(Error::Empty("loss_surf values"));
    }
    let a = tape.abs(values)?;
    tape.mean(a)
}
