use crate::error::{Error, Result};
use crate::geometry::{KdTree, PointCloud};
use crate::tensor::{Tape, Tensor, Var};

/// Patches around the encoder codes.
#[derive(Clone, Debug)]
pub struct Patches {
    /// Patch points `[M * patch_size, 3]`, patch by patch, each starting
    /// with its centre code.
    pub points: Var,
    /// Pool indices of the non-centre members, `patch_size - 1` per patch.
    pub members: Vec<usize>,
    pub patch_size: usize,
}

impl Patches {
    pub fn count(&self) -> usize {
        self.members.len() / (self.patch_size - 1).max(1)
    }
}

pub(super) fn sample(
    tape: &mut Tape,
    codes: Var,
    pool: &PointCloud,
    pool_tree: &KdTree,
    patch_size: usize,
) -> Result<Patches> {
    if patch_size == 0 || patch_size > pool.len() {
        return Err(Error::invalid(format!(
            "patch_size {patch_size} outside 1..={}",
            pool.len()
        )));
    }
    let m = tape.shape(codes)[0];
    let code_values = tape.value(codes).to_points();
    let mut members = Vec::with_capacity(m * (patch_size - 1));
    for &c in &code_values {
        members.extend(pool_tree.knn(c, patch_size - 1)?);
    }
    if patch_size == 1 {
        return Ok(Patches {
            points: codes,
            members,
            patch_size,
        });
    }
    let pool_rows = Tensor::new(
        members.len(),
        3,
        members.iter().flat_map(|&i| pool.points[i]).collect(),
    );
    let pool_rows = tape.constant(pool_rows)?;
    let stacked = tape.concat_rows(&[codes, pool_rows])?;
    let mut order = Vec::with_capacity(m * patch_size);
    for p in 0..m {
        order.push(p);
        order.extend((0..patch_size - 1).map(|j| m + p * (patch_size - 1) + j));
    }
    let points = tape.gather_rows(stacked, order)?;
    Ok(Patches {
        points,
        members,
        patch_size,
    })
}
