use rand::Rng;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Slope of the leaky rectifier used for every hidden activation.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn from_index(i: usize) -> Self {
        ParamId(i)
    }
}

/// Named learnable tensors, in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name `{name}`"
        );
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// All scalars concatenated in registration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Inverse of [`ParamStore::flatten`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.numel() {
            return Err(Error::invalid(format!(
                "expected {} parameter values, got {}",
                self.numel(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Replaces the value of an existing parameter, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))?;
        if self.tensors[id.0].shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "ParamStore::set",
                lhs: self.tensors[id.0].shape(),
                rhs: value.shape(),
            });
        }
        self.tensors[id.0] = value;
        Ok(())
    }
}

fn uniform_init(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Tensor::new(rows, cols, data)
}

/// Affine layer `x W + b` with `W: [fan_in, fan_out]`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Registers a layer initialised uniformly in `±sqrt(1/fan_in)`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = (1.0 / fan_in as f64).sqrt();
        let weight = store.add(
            format!("{name}.weight"),
            uniform_init(rng, fan_in, fan_out, bound),
        );
        let bias =
            bias.then(|| store.add(format!("{name}.bias"), uniform_init(rng, 1, fan_out, bound)));
        Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(x, params[self.weight.index()])?;
        match self.bias {
            Some(b) => tape.add_row(y, params[b.index()]),
            None => Ok(y),
        }
    }
}

/// Stack of linear layers with leaky-rectifier activations between them and
/// a linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [in, hidden.., out]`.
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(
            dims.len() >= 2,
            "an MLP needs at least input and output dims"
        );
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        Ok(self.forward_with_preacts(tape, params, x)?.0)
    }

    /// Forward pass that also returns the pre-activation of every hidden
    /// layer (needed to differentiate with respect to the input).
    pub fn forward_with_preacts(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: Var,
    ) -> Result<(Var, Vec<Var>)> {
        let mut h = x;
        let mut preacts = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(tape, params, h)?;
            if i < last {
                preacts.push(z);
                h = tape.leaky_relu(z, LEAKY_SLOPE)?;
            } else {
                h = z;
            }
        }
        Ok((h, preacts))
    }

    /// Gradient of the (scalar-output) network with respect to its input,
    /// recorded on the tape so that parameter gradients flow through it.
    ///
    /// `preact_values` are the hidden pre-activations for the rows of
    /// interest; the activation derivative is piecewise constant, so only
    /// its branch is read from them.
    pub fn input_gradient(
        &self,
        tape: &mut Tape,
        params: &[Var],
        rows: usize,
        preact_values: &[Tensor],
    ) -> Result<Var> {
        if self.output_dim() != 1 {
            return Err(Error::invalid("input_gradient needs a scalar-output MLP"));
        }
        if preact_values.len() + 1 != self.layers.len() {
            return Err(Error::invalid(
                "one pre-activation per hidden layer expected",
            ));
        }
        if preact_values.iter().any(|z| z.rows() != rows) {
            return Err(Error::invalid("pre-activation row count mismatch"));
        }
        let mut delta = tape.constant(Tensor::full(rows, 1, 1.0))?;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            delta = tape.matmul_nt(delta, params[layer.weight.index()])?;
            if i > 0 {
                let z = &preact_values[i - 1];
                let mask = z
                    .data()
                    .iter()
                    .map(|&v| if v > 0.0 { 1.0 } else { LEAKY_SLOPE })
                    .collect();
                let mask = tape.constant(Tensor::new(z.rows(), z.cols(), mask))?;
                delta = tape.mul(delta, mask)?;
            }
        }
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let l = Linear::new(&mut store, "l", 16, 4, true, &mut rng);
        let bound = 0.25;
        assert!(store
            .tensor(l.weight)
            .data()
            .iter()
            .all(|v| v.abs() <= bound));
        assert_eq!(store.tensor(l.weight).shape(), [16, 4]);
        assert_eq!(store.tensor(l.bias.unwrap()).shape(), [1, 4]);
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        Mlp::new(&mut store, "m", &[3, 5, 1], &mut rng);
        let flat = store.flatten();
        let mut other = store.clone();
        other.set_flat(&vec![0.0; flat.len()]).unwrap();
        other.set_flat(&flat).unwrap();
        assert_eq!(store, other);
    }

    #[test]
    fn linear_network_gradient_is_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "g", &[3, 1], &mut rng);
        let mut tape = Tape::new();
        let p = tape.bind(&store).unwrap();
        let grad = mlp.input_gradient(&mut tape, &p, 1, &[]).unwrap();
        let w = store.tensor(mlp.layers[0].weight);
        assert_eq!(tape.value(grad).data(), w.data());
    }
}
