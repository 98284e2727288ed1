use crate::error::{Error, Result};
use crate::geometry::{KdTree, Point3};
use crate::tensor::{Tape, Tensor, Var};

/// Symmetric squared Chamfer distance between the rows of `a` (on the tape)
/// and the constant cloud `b`:
/// `mean_a min_b |a - b|^2 + mean_b min_a |b - a|^2`.
///
/// Nearest-neighbour assignments are computed from the current values and
/// held fixed; gradients flow through the differences into `a`.
pub fn chamfer_sq(tape: &mut Tape, a: Var, b: &[Point3]) -> Result<Var> {
    let [na, cols] = tape.shape(a);
    if cols != 3 {
        return Err(Error::ShapeMismatch {
            op: "chamfer_sq",
            lhs: [na, cols],
            rhs: [na, 3],
        });
    }
    if na == 0 {
        return Err(Error::Empty("chamfer_sq moving cloud"));
    }
    if b.is_empty() {
        return Err(Error::Empty("chamfer_sq target cloud"));
    }
    let a_points = tape.value(a).to_points();
    let b_tree = KdTree::new(b);
    let a_tree = KdTree::new(&a_points);
    let a_to_b: Vec<usize> = a_points
        .iter()
        .map(|&p| b_tree.nearest(p).expect("non-empty").0)
        .collect();
    let b_to_a: Vec<usize> = b
        .iter()
        .map(|&p| a_tree.nearest(p).expect("non-empty").0)
        .collect();
    let bv = tape.constant(Tensor::new(
        b.len(),
        3,
        b.iter().flatten().copied().collect(),
    ))?;

    let targets = tape.gather_rows(bv, a_to_b)?;
    let d1 = tape.sub(a, targets)?;
    let sq1 = tape.mul(d1, d1)?;
    let m1 = tape.mean(sq1)?;

    let sources = tape.gather_rows(a, b_to_a)?;
    let d2 = tape.sub(sources, bv)?;
    let sq2 = tape.mul(d2, d2)?;
    let m2 = tape.mean(sq2)?;

    // mean over 3 coordinates per row; undo to get per-point squared distance
    let total = tape.add(m1, m2)?;
    tape.scale(total, 3.0)
}

/// Fit of the decoded cloud `s` to the input `q`.
pub fn loss_para(tape: &mut Tape, s: Var, q: &[Point3]) -> Result<Var> {
    chamfer_sq(tape, s, q)
}
