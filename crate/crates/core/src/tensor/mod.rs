//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every value is a row-major matrix of shape `[rows, cols]`; scalars are
//! `[1, 1]`. The [`Tape`] records operations define-by-run and is rebuilt
//! for every training iteration. Learnable tensors live in a [`ParamStore`]
//! outside the tape and are bound to leaf nodes with [`Tape::bind`].
//!
//! Per-kind shape rules:
//!
//! | op | inputs | output |
//! |----|--------|--------|
//! | `matmul` | `[n,k] x [k,m]` | `[n,m]` |
//! | `matmul_nt` | `[n,k] x [m,k]` | `[n,m]` (rhs transposed) |
//! | `add`, `sub`, `mul`, `div` | equal shapes | same |
//! | `add_row` | `[n,m] + [1,m]` | `[n,m]` (row broadcast, for biases) |
//! | `mul_col` | `[n,m] * [n,1]` | `[n,m]` (per-row scaling) |
//! | `scale`, `offset`, `leaky_relu`, `abs`, `clamp_min`, `recip` | any | same |
//! | `softmax_rows` | `[n,m]` | `[n,m]`, each row sums to one |
//! | `softmax_groups(g)` | `[n*g,m]` | softmax over each block of `g` rows, per column |
//! | `row_norm` | `[n,m]` | `[n,1]` (L2 norm along the last axis) |
//! | `segment_sum(g)` | `[n*g,m]` | `[n,m]` |
//! | `concat_rows` | `[n_i,m]` | `[sum n_i, m]` |
//! | `concat_cols` | `[n,m_i]` | `[n, sum m_i]` |
//! | `gather_rows(idx)` | `[n,m]` | `[idx.len(), m]` |
//! | `reshape` | `[n,m]` | any shape with `n*m` elements |
//! | `sum`, `mean` | any | `[1,1]` |

mod adam;
mod gradcheck;
mod nn;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, finite_diff_check_params, GradCheckReport, GradSample};
pub use nn::{Linear, Mlp, ParamId, ParamStore, LEAKY_SLOPE};
pub use tape::{Gradients, Tape, Var};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length mismatch");
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Tensor::new(rows, cols, vec![value; rows * cols])
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new(1, 1, vec![value])
    }

    pub fn from_rows<const N: usize>(rows: &[[f64; N]]) -> Self {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::new(rows.len(), N, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Rows as fixed 3-vectors. Panics unless `cols == 3`.
    pub fn to_points(&self) -> Vec<[f64; 3]> {
        assert_eq!(self.cols, 3, "to_points needs three columns");
        self.data
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// The single element of a one-element tensor (scalar losses).
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }
}

/// `c = op(a) * op(b) + beta * c` where `op` optionally transposes.
///
/// `a_shape` and `b_shape` are the stored shapes; `ta`/`tb` request the
/// transposed view. `c` must hold `m * n` elements.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    a: &[f64],
    a_shape: [usize; 2],
    ta: bool,
    b: &[f64],
    b_shape: [usize; 2],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    let (m, k) = if ta {
        (a_shape[1], a_shape[0])
    } else {
        (a_shape[0], a_shape[1])
    };
    let (kb, n) = if tb {
        (b_shape[1], b_shape[0])
    } else {
        (b_shape[0], b_shape[1])
    };
    debug_assert_eq!(k, kb);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if ta {
        (1, a_shape[1] as isize)
    } else {
        (a_shape[1] as isize, 1)
    };
    let (rsb, csb) = if tb {
        (1, b_shape[1] as isize)
    } else {
        (b_shape[1] as isize, 1)
    };
    // SAFETY: strides describe the row-major buffers `a`, `b`, `c`, whose
    // lengths were checked against the shapes by the caller.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
