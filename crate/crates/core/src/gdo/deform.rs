use rand::Rng;

use super::field::ScalarField;
use super::grid::TetGrid;
use super::mt::DeformedGrid;
use super::sdf::points_tensor;
use crate::error::Result;
use crate::geometry::Point3;
use crate::tensor::{Mlp, ParamStore, Tape, Var};

/// Floor on `|grad g|` when normalising the deformation direction.
pub const NORMAL_EPS: f64 = 1e-8;

/// `V' = V - g(V) * grad g(V) / max(|grad g(V)|, NORMAL_EPS)`, with the field
/// values at the undeformed vertices carried along.
pub fn deform_vertices(grid: &TetGrid, field: &dyn ScalarField) -> Result<DeformedGrid> {
    deform_points(&grid.vertices, field)
}

pub fn deform_points(points: &[Point3], field: &dyn ScalarField) -> Result<DeformedGrid> {
    let (values, grads) = field.eval(points)?;
    let positions = points
        .iter()
        .zip(values.iter().zip(&grads))
        .map(|(p, (&g, n))| {
            let len = crate::geometry::vec3::norm(*n).max(NORMAL_EPS);
            std::array::from_fn(|k| p[k] - g * n[k] / len)
        })
        .collect();
    Ok(DeformedGrid { positions, values })
}

/// The same projection on the tape: `values [n,1]`, `gradients [n,3]` and
/// constant `positions` give deformed positions `[n,3]`.
pub fn deform_on_tape(
    tape: &mut Tape,
    positions: &[Point3],
    values: Var,
    gradients: Var,
) -> Result<Var> {
    let len = tape.row_norm(gradients)?;
    let len = tape.clamp_min(len, NORMAL_EPS)?;
    let inv = tape.recip(len)?;
    let unit = tape.mul_col(gradients, inv)?;
    let step = tape.mul_col(unit, values)?;
    let v = tape.constant(points_tensor(positions))?;
    tape.sub(v, step)
}

/// Free per-vertex offset field `V' = V + eps(V)` for the ablation without
/// gradient guidance.
#[derive(Clone, Debug)]
pub struct OffsetNetwork {
    pub mlp: Mlp,
}

impl OffsetNetwork {
    /// The output layer starts at zero, so initially `V' = V`.
    pub fn new(store: &mut ParamStore, name: &str, width: usize, rng: &mut impl Rng) -> Self {
        let mlp = Mlp::new(store, name, &[3, width, width, 3], rng);
        let last = mlp.layers.last().expect("non-empty mlp");
        for id in std::iter::once(last.weight).chain(last.bias) {
            store
                .tensor_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|w| *w = 0.0);
        }
        OffsetNetwork { mlp }
    }

    pub fn deform_on_tape(
        &self,
        tape: &mut Tape,
        params: &[Var],
        positions: &[Point3],
    ) -> Result<Var> {
        let v = tape.constant(points_tensor(positions))?;
        let eps = self.mlp.forward(tape, params, v)?;
        tape.add(v, eps)
    }
}
