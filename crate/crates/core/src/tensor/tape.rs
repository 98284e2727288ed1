use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::nn::{ParamId, ParamStore};
use super::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    LeakyRelu(Var, f64),
    Abs(Var),
    ClampMin(Var, f64),
    Recip(Var),
    SoftmaxRows(Var),
    SoftmaxGroups(Var, usize),
    RowNorm(Var),
    SegmentSum(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, so every node's inputs precede it.
/// [`Tape::backward`] walks the list once in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<[usize; 2]>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<Tensor> {
        let [r, c] = self.shapes[v.0];
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(r, c, g.clone()))
    }

    /// Gradient with zeros substituted for untouched nodes.
    pub fn get_or_zero(&self, v: Var) -> Tensor {
        let [r, c] = self.shapes[v.0];
        self.get(v).unwrap_or_else(|| Tensor::zeros(r, c))
    }

    /// Gradients of every bound parameter, in `ParamStore` order.
    ///
    /// A parameter bound more than once has its contributions summed.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Option<Tensor>> {
        let mut out: Vec<Option<Tensor>> = vec![None; store.len()];
        for &(pid, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                let [r, c] = self.shapes[node];
                match &mut out[pid.index()] {
                    Some(acc) => acc.data_mut().iter_mut().zip(g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(Tensor::new(r, c, g.clone())),
                }
            }
        }
        out
    }
}

fn check_same(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { op, lhs: a, rhs: b })
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name.to_string()));
        }
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push("constant", value, Op::Leaf)
    }

    /// Records every parameter of `store` as a trainable leaf. The returned
    /// vector is indexed by [`ParamId::index`].
    pub fn bind(&mut self, store: &ParamStore) -> Result<Vec<Var>> {
        (0..store.len())
            .map(|i| {
                let pid = ParamId::from_index(i);
                let v = self
                    .push("parameter", store.tensor(pid).clone(), Op::Leaf)
                    .map_err(|_| Error::NonFinite(format!("parameter `{}`", store.name(pid))))?;
                self.nodes[v.0].param = Some(pid);
                Ok(v)
            })
            .collect()
    }

    fn matmul_impl(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        let (m, k) = if ta { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
        let (kb, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            self.value(a).data(),
            sa,
            ta,
            self.value(b).data(),
            sb,
            tb,
            0.0,
            &mut out,
        );
        self.push(
            "matmul",
            Tensor::new(m, n, out),
            Op::MatMul { a, b, ta, tb },
        )
    }

    /// `a * b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false, false)
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false, true)
    }

    fn zip(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        check_same(name, sa, sb)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(name, Tensor::new(sa[0], sa[1], data), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Adds a `[1, m]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        check_same("add_row", [1, sa[1]], sr)?;
        let r = self.value(row).data();
        let mut data = self.value(a).data().to_vec();
        if sa[1] > 0 {
            for x in data.chunks_exact_mut(sa[1]) {
                x.iter_mut().zip(r).for_each(|(x, y)| *x += y);
            }
        }
        self.push(
            "add_row",
            Tensor::new(sa[0], sa[1], data),
            Op::AddRow(a, row),
        )
    }

    /// Scales row `i` of `a` by `col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (sa, sc) = (self.shape(a), self.shape(col));
        check_same("mul_col", [sa[0], 1], sc)?;
        let c = self.value(col).data();
        let mut data = self.value(a).data().to_vec();
        if sa[1] > 0 {
            for (row, &s) in data.chunks_exact_mut(sa[1]).zip(c) {
                row.iter_mut().for_each(|x| *x *= s);
            }
        }
        self.push(
            "mul_col",
            Tensor::new(sa[0], sa[1], data),
            Op::MulCol(a, col),
        )
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let s = self.shape(a);
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        self.push(name, Tensor::new(s[0], s[1], data), op)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("scale", a, |x| c * x, Op::Scale(a, c))
    }

    /// Adds the constant `c` to every element.
    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("offset", a, |x| x + c, Op::Offset(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.map(
            "leaky_relu",
            a,
            |x| if x > 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.map("abs", a, f64::abs, Op::Abs(a))
    }

    /// `max(x, lo)`; the gradient is zero where the bound is active.
    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Result<Var> {
        self.map("clamp_min", a, |x| x.max(lo), Op::ClampMin(a, lo))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        self.map("recip", a, |x| 1.0 / x, Op::Recip(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let [n, m] = self.shape(a);
        let mut data = self.value(a).data().to_vec();
        if m > 0 {
            for row in data.chunks_exact_mut(m) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    total += *x;
                }
                row.iter_mut().for_each(|x| *x /= total);
            }
        }
        self.push("softmax_rows", Tensor::new(n, m, data), Op::SoftmaxRows(a))
    }

    /// Softmax over each consecutive block of `group` rows, independently
    /// per column.
    pub fn softmax_groups(&mut self, a: Var, group: usize) -> Result<Var> {
        let [n, m] = self.shape(a);
        if group == 0 || n % group != 0 {
            return Err(Error::ShapeMismatch {
                op: "softmax_groups",
                lhs: [n, m],
                rhs: [group, 0],
            });
        }
        let src = self.value(a).data();
        let mut data = vec![0.0; n * m];
        for block in 0..n / group {
            let base = block * group;
            for c in 0..m {
                let mut max = f64::NEG_INFINITY;
                for r in 0..group {
                    max = max.max(src[(base + r) * m + c]);
                }
                let mut total = 0.0;
                for r in 0..group {
                    let e = (src[(base + r) * m + c] - max).exp();
                    data[(base + r) * m + c] = e;
                    total += e;
                }
                for r in 0..group {
                    data[(base + r) * m + c] /= total;
                }
            }
        }
        self.push(
            "softmax_groups",
            Tensor::new(n, m, data),
            Op::SoftmaxGroups(a, group),
        )
    }

    /// L2 norm of every row, as a column.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let [n, m] = self.shape(a);
        let data = if m == 0 {
            vec![0.0; n]
        } else {
            self.value(a)
                .data()
                .chunks_exact(m)
                .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
                .collect()
        };
        self.push("row_norm", Tensor::new(n, 1, data), Op::RowNorm(a))
    }

    /// Sums each consecutive block of `group` rows.
    pub fn segment_sum(&mut self, a: Var, group: usize) -> Result<Var> {
        let [n, m] = self.shape(a);
        if group == 0 || n % group != 0 {
            return Err(Error::ShapeMismatch {
                op: "segment_sum",
                lhs: [n, m],
                rhs: [group, 0],
            });
        }
        let src = self.value(a).data();
        let blocks = n / group;
        let mut data = vec![0.0; blocks * m];
        for b in 0..blocks {
            let out = &mut data[b * m..(b + 1) * m];
            for r in 0..group {
                let row = &src[(b * group + r) * m..(b * group + r + 1) * m];
                out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
            }
        }
        self.push(
            "segment_sum",
            Tensor::new(blocks, m, data),
            Op::SegmentSum(a, group),
        )
    }

    /// Column-wise mean, `[n, m] -> [1, m]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let n = self.shape(a)[0];
        if n == 0 {
            return Err(Error::Empty("mean_rows input"));
        }
        let s = self.segment_sum(a, n)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Empty("concat_rows"));
        };
        let m = self.shape(first)[1];
        let mut data = Vec::new();
        let mut n = 0;
        for &p in parts {
            let s = self.shape(p);
            check_same("concat_rows", [s[0], m], s)?;
            data.extend_from_slice(self.value(p).data());
            n += s[0];
        }
        self.push(
            "concat_rows",
            Tensor::new(n, m, data),
            Op::ConcatRows(parts.to_vec()),
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Empty("concat_cols"));
        };
        let n = self.shape(first)[0];
        let mut m = 0;
        for &p in parts {
            let s = self.shape(p);
            check_same("concat_cols", [n, s[1]], s)?;
            m += s[1];
        }
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        self.push(
            "concat_cols",
            Tensor::new(n, m, data),
            Op::ConcatCols(parts.to_vec()),
        )
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let [n, m] = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!(
                "gather_rows index {bad} out of range for {n} rows"
            )));
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * m);
        for &i in &idx {
            data.extend_from_slice(src.row(i));
        }
        let rows = idx.len();
        self.push(
            "gather_rows",
            Tensor::new(rows, m, data),
            Op::GatherRows(a, idx),
        )
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let s = self.shape(a);
        if s[0] * s[1] != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: s,
                rhs: [rows, cols],
            });
        }
        let data = self.value(a).data().to_vec();
        self.push("reshape", Tensor::new(rows, cols, data), Op::Reshape(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::Empty("mean input"));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a))
    }

    /// Hash of every data-dependent branch taken by the forward pass:
    /// activation sides of `leaky_relu`/`abs` and the index lists of
    /// `gather_rows`. Two evaluations with equal signatures lie on the same
    /// smooth piece of the recorded function.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::LeakyRelu(a, _) | Op::Abs(a) => {
                    for &x in self.nodes[a.0].value.data() {
                        (x > 0.0).hash(&mut h);
                        (x == 0.0).hash(&mut h);
                    }
                }
                Op::ClampMin(a, lo) => {
                    for &x in self.nodes[a.0].value.data() {
                        (x > *lo).hash(&mut h);
                    }
                }
                Op::GatherRows(_, idx) => idx.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(Error::NotScalar(shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("backward at node {i}")));
                }
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            params: self
                .nodes
                .iter()
                .enumerate()
                .filter_map(|(i, n)| n.param.map(|p| (p, i)))
                .collect(),
        })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, ta, tb } => {
                let sa = self.shape(a);
                let sb = self.shape(b);
                let [m, n] = node.value.shape();
                let av = self.value(a).data();
                let bv = self.value(b).data();
                {
                    let ga = slot(grads, &self.nodes, a);
                    if ta {
                        gemm(bv, sb, tb, g, [m, n], true, 1.0, ga);
                    } else {
                        gemm(g, [m, n], false, bv, sb, !tb, 1.0, ga);
                    }
                }
                let gb = slot(grads, &self.nodes, b);
                if tb {
                    gemm(g, [m, n], true, av, sa, ta, 1.0, gb);
                } else {
                    gemm(av, sa, !ta, g, [m, n], false, 1.0, gb);
                }
            }
            &Op::Add(a, b) => {
                slot(grads, &self.nodes, a)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(x, d)| *x += d);
                slot(grads, &self.nodes, b)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(x, d)| *x += d);
            }
            &Op::Sub(a, b) => {
                slot(grads, &self.nodes, a)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(x, d)| *x += d);
                slot(grads, &self.nodes, b)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(x, d)| *x -= d);
            }
            &Op::Mul(a, b) => {
                let av = self.value(a).data();
                let bv = self.value(b).data();
                slot(grads, &self.nodes, a)
                    .iter_mut()
                    .zip(g.iter().zip(bv))
                    .for_each(|(x, (d, y))| *x += d * y);
                slot(grads, &self.nodes, b)
                    .iter_mut()
                    .zip(g.iter().zip(av))
                    .for_each(|(x, (d, y))| *x += d * y);
            }
            &Op::Div(a, b) => {
                let bv = self.value(b).data();
                slot(grads, &self.nodes, a)
                    .iter_mut()
                    .zip(g.iter().zip(bv))
                    .for_each(|(x, (d, y))| *x += d / y);
                slot(grads, &self.nodes, b)
                    .iter_mut()
                    .zip(g.iter().zip(bv.iter().zip(out)))
                    .for_each(|(x, (d, (y, q)))| *x -= d * q / y);
            }
            &Op::AddRow(a, row) => {
                slot(grads, &self.nodes, a)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(x, d)| *x += d);
                let m = self.shape(row)[1];
                if m > 0 {
                    let gr = slot(grads, &self.nodes, row);
                    for chunk in g.chunks_exact(m) {
                        gr.iter_mut().zip(chunk).for_each(|(x, d)| *x += d);
                    }
                }
            }
            &Op::MulCol(a, col) => {
                let m = self.shape(a)[1];
                if m == 0 {
                    return;
                }
                let av = self.value(a).data();
                let cv = self.value(col).data();
                {
                    let ga = slot(grads, &self.nodes, a);
                    for ((gx, gd), &s) in ga.chunks_exact_mut(m).zip(g.chunks_exact(m)).zip(cv) {
                        gx.iter_mut().zip(gd).for_each(|(x, d)| *x += d * s);
                    }
                }
                let gc = slot(grads, &self.nodes, col);
                for ((x, gd), ar) in gc.iter_mut().zip(g.chunks_exact(m)).zip(av.chunks_exact(m)) {
                    *x += gd.iter().zip(ar).map(|(d, y)| d * y).sum::<f64>();
                }
            }
            &Op::Scale(a, c) => {
                slot(grads, &self.nodes, a)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(x, d)| *x += c * d);
            }
            &Op::Offset(a) | &Op::Reshape(a) => {
                slot(grads, &self.nodes, a)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(x, d)| *x += d);
            }
            &Op::LeakyRelu(a, slope) => {
                let av = self.value(a).data();
                slot(grads, &self.nodes, a)
                    .iter_mut()
                    .zip(g.iter().zip(av))
                    .for_each(|(x, (d, y))| *x += if *y > 0.0 { *d } else { slope * d });
            }
            &Op::Abs(a) => {
                let av = self.value(a).data();
                slot(grads, &self.nodes, a)
                    .iter_mut()
                    .zip(g.iter().zip(av))
                    .for_each(|(x, (d, y))| {
                        if *y > 0.0 {
                            *x += d
                        } else if *y < 0.0 {
                            *x -= d
                        }
                    });
            }
            &Op::ClampMin(a, lo) => {
                let av = self.value(a).data();
                slot(grads, &self.nodes, a)
                    .iter_mut()
                    .zip(g.iter().zip(av))
                    .for_each(|(x, (d, y))| {
                        if *y > lo {
                            *x += d
                        }
                    });
            }
            &Op::Recip(a) => {
                slot(grads, &self.nodes, a)
                    .iter_mut()
                    .zip(g.iter().zip(out))
                    .for_each(|(x, (d, y))| *x -= d * y * y);
            }
            &Op::SoftmaxRows(a) => {
                let m = node.value.cols();
                if m == 0 {
                    return;
                }
                let ga = slot(grads, &self.nodes, a);
                for ((gx, gd), y) in ga
                    .chunks_exact_mut(m)
                    .zip(g.chunks_exact(m))
                    .zip(out.chunks_exact(m))
                {
                    let dot: f64 = gd.iter().zip(y).map(|(d, y)| d * y).sum();
                    for ((x, d), y) in gx.iter_mut().zip(gd).zip(y) {
                        *x += y * (d - dot);
                    }
                }
            }
            &Op::SoftmaxGroups(a, group) => {
                let [n, m] = node.value.shape();
                let ga = slot(grads, &self.nodes, a);
                for block in 0..n / group {
                    let base = block * group;
                    for c in 0..m {
                        let dot: f64 = (0..group)
                            .map(|r| g[(base + r) * m + c] * out[(base + r) * m + c])
                            .sum();
                        for r in 0..group {
                            let k = (base + r) * m + c;
                            ga[k] += out[k] * (g[k] - dot);
                        }
                    }
                }
            }
            &Op::RowNorm(a) => {
                let m = self.shape(a)[1];
                if m == 0 {
                    return;
                }
                let av = self.value(a).data();
                let ga = slot(grads, &self.nodes, a);
                for (((gx, ar), d), nrm) in ga
                    .chunks_exact_mut(m)
                    .zip(av.chunks_exact(m))
                    .zip(g)
                    .zip(out)
                {
                    if *nrm > 0.0 {
                        gx.iter_mut().zip(ar).for_each(|(x, y)| *x += d * y / nrm);
                    }
                }
            }
            &Op::SegmentSum(a, group) => {
                let m = node.value.cols();
                if m == 0 {
                    return;
                }
                let ga = slot(grads, &self.nodes, a);
                for (r, gx) in ga.chunks_exact_mut(m).enumerate() {
                    let gd = &g[(r / group) * m..(r / group + 1) * m];
                    gx.iter_mut().zip(gd).for_each(|(x, d)| *x += d);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.len();
                    slot(grads, &self.nodes, p)
                        .iter_mut()
                        .zip(&g[offset..offset + len])
                        .for_each(|(x, d)| *x += d);
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let n = node.value.rows();
                let m = node.value.cols();
                let mut col = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    let gp = slot(grads, &self.nodes, p);
                    for i in 0..n {
                        gp[i * w..(i + 1) * w]
                            .iter_mut()
                            .zip(&g[i * m + col..i * m + col + w])
                            .for_each(|(x, d)| *x += d);
                    }
                    col += w;
                }
            }
            Op::GatherRows(a, idx) => {
                let m = node.value.cols();
                if m == 0 {
                    return;
                }
                let ga = slot(grads, &self.nodes, *a);
                for (gd, &src) in g.chunks_exact(m).zip(idx) {
                    ga[src * m..(src + 1) * m]
                        .iter_mut()
                        .zip(gd)
                        .for_each(|(x, d)| *x += d);
                }
            }
            &Op::Sum(a) => {
                let d = g[0];
                slot(grads, &self.nodes, a).iter_mut().for_each(|x| *x += d);
            }
            &Op::Mean(a) => {
                let len = self.nodes[a.0].value.len();
                let d = g[0] / len as f64;
                slot(grads, &self.nodes, a).iter_mut().for_each(|x| *x += d);
            }
        }
    }
}

fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'g mut Vec<f64> {
    let len = nodes[v.0].value.len();
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}
