//! Grid deformation optimisation: a signed-distance network drives the
//! vertices of a tetrahedral grid onto its zero level set, and marching
//! tetrahedra extracts the surface.
//!
//! Training evaluates `g` at every grid vertex (for the surface loss) but
//! builds the deformation and interpolation only for vertices of
//! sign-changing edges, which are the only ones that reach the mesh.

mod deform;
mod extract;
mod field;
mod grid;
mod mt;
mod sdf;

pub use deform::{deform_on_tape, deform_points, deform_vertices, OffsetNetwork, NORMAL_EPS};
pub use extract::{
    gdo_forward, loss_deform, loss_surf, surface_vertex_samples, Deformation, GdoForward,
    SurfaceSamples,
};
pub use field::{BoxSdf, PlaneSdf, ScalarField, SphereSdf};
pub use grid::{tet_volume, TetGrid, MAX_RESOLUTION};
pub use mt::{
    edge_crossing, interpolate, marching_tetrahedra, mt_topology, nudge, DeformedGrid, Extraction,
    MtTopology, SIGN_TIE,
};
pub use sdf::{NetworkField, SdfEval, SdfNetwork};

/// Builds the `r`-resolution grid over `[-0.5, 0.5]^3`.
pub fn build_tet_grid(resolution: usize) -> crate::Result<TetGrid> {
    TetGrid::new(resolution)
}
