use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{KdTree, Point3};
use crate::tensor::{Linear, Mlp, ParamStore, Tape, Tensor, Var};

/// Norm below which [`sphere_project`] jitters its input.
pub const PROJECTION_EPS: f64 = 1e-8;
const JITTER: f64 = 1e-6;

/// Point-wise vector attention over k nearest neighbours, followed by a
/// projection to the unit sphere.
///
/// For point `q_n` with neighbours `q_k` and `xi = delta(q_n - q_k)`:
/// `f_n = sum_k softmax_k(gamma(beta(q_n) - eta(q_k) + xi)) * (alpha(q_k) + xi)`,
/// where the softmax runs over the neighbours separately per channel. The
/// code is the radial projection of `q_n + proj(f_n)`.
#[derive(Clone, Debug)]
pub struct CanonicalMapping {
    pub alpha: Linear,
    pub beta: Linear,
    pub eta: Linear,
    pub gamma: Mlp,
    pub delta: Mlp,
    pub proj: Linear,
    pub k: usize,
}

/// Encoder outputs on the tape.
#[derive(Clone, Debug)]
pub struct PhiOutput {
    /// `[N, d]`.
    pub features: Var,
    /// `[N, 3]`, unit rows.
    pub codes: Var,
    /// Neighbour indices, `k` per point, nearest first.
    pub neighbors: Vec<usize>,
}

impl CanonicalMapping {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, k: usize, rng: &mut impl Rng) -> Self {
        let alpha = Linear::new(store, &format!("{name}.alpha"), 3, d, true, rng);
        let beta = Linear::new(store, &format!("{name}.beta"), 3, d, true, rng);
        let eta = Linear::new(store, &format!("{name}.eta"), 3, d, true, rng);
        let gamma = Mlp::new(store, &format!("{name}.gamma"), &[d, d, d, d], rng);
        let delta = Mlp::new(store, &format!("{name}.delta"), &[3, d, d, d], rng);
        let proj = Linear::new(store, &format!("{name}.proj"), d, 3, true, rng);
        // small initial offsets keep the first codes close to the radial
        // projection of the input
        for id in [proj.weight, proj.bias.expect("proj has a bias")] {
            store
                .tensor_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|w| *w *= 0.1);
        }
        CanonicalMapping {
            alpha,
            beta,
            eta,
            gamma,
            delta,
            proj,
            k,
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], q: &[Point3]) -> Result<PhiOutput> {
        let n = q.len();
        let k = self.k;
        if n < k {
            return Err(Error::invalid(format!("{n} points but k = {k}")));
        }
        let tree = KdTree::new(q);
        let mut neighbors = Vec::with_capacity(n * k);
        let mut centers = Vec::with_capacity(n * k);
        let mut rel = Vec::with_capacity(n * k * 3);
        for (i, &p) in q.iter().enumerate() {
            for j in tree.knn(p, k)? {
                neighbors.push(j);
                centers.push(i);
                rel.extend((0..3).map(|c| p[c] - q[j][c]));
            }
        }
        let qv = tape.constant(Tensor::new(n, 3, q.iter().flatten().copied().collect()))?;
        let rel = tape.constant(Tensor::new(n * k, 3, rel))?;

        let xi = self.delta.forward(tape, params, rel)?;
        let a = self.alpha.forward(tape, params, qv)?;
        let b = self.beta.forward(tape, params, qv)?;
        let e = self.eta.forward(tape, params, qv)?;
        let b = tape.gather_rows(b, centers)?;
        let e = tape.gather_rows(e, neighbors.clone())?;
        let a = tape.gather_rows(a, neighbors.clone())?;

        let logits = tape.sub(b, e)?;
        let logits = tape.add(logits, xi)?;
        let logits = self.gamma.forward(tape, params, logits)?;
        let weights = tape.softmax_groups(logits, k)?;
        let values = tape.add(a, xi)?;
        let weighted = tape.mul(weights, values)?;
        let features = tape.segment_sum(weighted, k)?;

        let offset = self.proj.forward(tape, params, features)?;
        let raw = tape.add(qv, offset)?;
        let codes = sphere_project(tape, raw)?;
        Ok(PhiOutput {
            features,
            codes,
            neighbors,
        })
    }
}

/// Radial projection of each row onto the unit sphere, on the tape.
///
/// Rows shorter than [`PROJECTION_EPS`] are first shifted by `1e-6` along
/// `+z`.
pub fn sphere_project(tape: &mut Tape, raw: Var) -> Result<Var> {
    let [n, cols] = tape.shape(raw);
    if cols != 3 {
        return Err(Error::ShapeMismatch {
            op: "sphere_project",
            lhs: [n, cols],
            rhs: [n, 3],
        });
    }
    let short: Vec<usize> = tape
        .value(raw)
        .data()
        .chunks_exact(3)
        .enumerate()
        .filter(|(_, r)| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt() < PROJECTION_EPS)
        .map(|(i, _)| i)
        .collect();
    let raw = if short.is_empty() {
        raw
    } else {
        warn!("sphere_project: jittering {} near-zero rows", short.len());
        let mut jitter = Tensor::zeros(n, 3);
        for &i in &short {
            jitter.data_mut()[i * 3 + 2] = JITTER;
        }
        let jitter = tape.constant(jitter)?;
        tape.add(raw, jitter)?
    };
    let norm = tape.row_norm(raw)?;
    let inv = tape.recip(norm)?;
    tape.mul_col(raw, inv)
}

/// Radial projection of a single point, with the same jitter rule as
/// [`sphere_project`].
pub fn sphere_project_point(p: Point3) -> Point3 {
    let mut p = p;
    if crate::geometry::vec3::norm(p) < PROJECTION_EPS {
        p[2] += JITTER;
    }
    let n = crate::geometry::vec3::norm(p);
    [p[0] / n, p[1] / n, p[2] / n]
}
