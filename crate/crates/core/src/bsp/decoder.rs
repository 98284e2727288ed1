use rand::Rng;

use crate::error::Result;
use crate::tensor::{Linear, Mlp, ParamStore, Tape, Var};

/// Maps sphere points back to 3D.
///
/// The point features are mean-pooled and lifted by `phi` to
/// `condition_tokens` rows of width `d`. Every patch point is embedded and
/// attends over those rows; a residual two-layer head emits its position.
#[derive(Clone, Debug)]
pub struct InverseMapping {
    pub phi: Mlp,
    pub embed: Mlp,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub head: Mlp,
    pub dim: usize,
    pub tokens: usize,
}

impl InverseMapping {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        tokens: usize,
        rng: &mut impl Rng,
    ) -> Self {
        InverseMapping {
            phi: Mlp::new(store, &format!("{name}.phi"), &[d, d, tokens * d], rng),
            embed: Mlp::new(store, &format!("{name}.embed"), &[3, d, d], rng),
            wq: Linear::new(store, &format!("{name}.wq"), d, d, false, rng),
            wk: Linear::new(store, &format!("{name}.wk"), d, d, false, rng),
            wv: Linear::new(store, &format!("{name}.wv"), d, d, false, rng),
            head: Mlp::new(store, &format!("{name}.head"), &[d, d, d, 3], rng),
            dim: d,
            tokens,
        }
    }

    /// Global condition `[tokens, d]` from point features `[N, d]`.
    pub fn condition(&self, tape: &mut Tape, params: &[Var], features: Var) -> Result<Var> {
        let pooled = tape.mean_rows(features)?;
        let c = self.phi.forward(tape, params, pooled)?;
        tape.reshape(c, self.tokens, self.dim)
    }

    /// Positions `[P, 3]` for sphere points `[P, 3]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        points: Var,
        features: Var,
    ) -> Result<Var> {
        let cond = self.condition(tape, params, features)?;
        self.decode(tape, params, points, cond)
    }

    pub fn decode(&self, tape: &mut Tape, params: &[Var], points: Var, cond: Var) -> Result<Var> {
        let h = self.embed.forward(tape, params, points)?;
        let q = self.wq.forward(tape, params, h)?;
        let k = self.wk.forward(tape, params, cond)?;
        let v = self.wv.forward(tape, params, cond)?;
        let logits = tape.matmul_nt(q, k)?;
        let logits = tape.scale(logits, 1.0 / (self.dim as f64).sqrt())?;
        let attn = tape.softmax_rows(logits)?;
        let ctx = tape.matmul(attn, v)?;
        let z = tape.add(h, ctx)?;
        self.head.forward(tape, params, z)
    }
}
