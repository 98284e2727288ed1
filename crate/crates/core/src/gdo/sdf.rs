use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::field::ScalarField;
use crate::error::Result;
use crate::geometry::Point3;
use crate::tensor::{Mlp, ParamStore, Tape, Tensor, Var};

/// Rows per chunk when a network is evaluated outside training.
const EVAL_CHUNK: usize = 8192;

/// MLP `g: R^3 -> R` with leaky-rectifier hidden layers and a linear output.
#[derive(Clone, Debug)]
pub struct SdfNetwork {
    pub mlp: Mlp,
}

/// Values and spatial gradients of `g` on the tape.
#[derive(Clone, Debug)]
pub struct SdfEval {
    /// `[n, 1]`.
    pub values: Var,
    /// `[n, 3]`.
    pub gradients: Var,
}

impl SdfNetwork {
    /// `depth` hidden layers of `width` units, geometrically initialised so
    /// that `g(x) ~ |x| - init_radius`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        depth: usize,
        init_radius: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut dims = vec![3];
        dims.resize(dims.len() + depth, width);
        dims.push(1);
        let net = SdfNetwork {
            mlp: Mlp::new(store, name, &dims, rng),
        };
        net.geometric_init(store, init_radius, rng);
        net
    }

    /// Sphere-shaped initialisation: zero-mean hidden weights with variance
    /// `2 / fan_out`, zero hidden biases, output weights around
    /// `sqrt(pi / fan_in)` and output bias `-radius`.
    pub fn geometric_init(&self, store: &mut ParamStore, radius: f64, rng: &mut impl Rng) {
        let last = self.mlp.layers.len() - 1;
        for (i, layer) in self.mlp.layers.iter().enumerate() {
            let (mean, std) = if i == last {
                ((std::f64::consts::PI / layer.fan_in as f64).sqrt(), 1e-4)
            } else {
                (0.0, (2.0 / layer.fan_out as f64).sqrt())
            };
            let normal = Normal::new(mean, std).expect("valid normal parameters");
            store
                .tensor_mut(layer.weight)
                .data_mut()
                .iter_mut()
                .for_each(|w| *w = normal.sample(rng));
            if let Some(b) = layer.bias {
                let fill = if i == last { -radius } else { 0.0 };
                store
                    .tensor_mut(b)
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = fill);
            }
        }
    }

    /// Values `[n, 1]` together with the hidden pre-activations, which
    /// [`SdfNetwork::gradients`] needs.
    pub fn values(
        &self,
        tape: &mut Tape,
        params: &[Var],
        points: &[Point3],
    ) -> Result<(Var, Vec<Tensor>)> {
        let x = tape.constant(points_tensor(points))?;
        self.values_at(tape, params, x)
    }

    /// As [`SdfNetwork::values`] for positions already on the tape.
    pub fn values_at(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<(Var, Vec<Tensor>)> {
        let (y, pre) = self.mlp.forward_with_preacts(tape, params, x)?;
        let pre = pre.iter().map(|&v| tape.value(v).clone()).collect();
        Ok((y, pre))
    }

    /// Spatial gradients `[rows.len(), 3]` at the given rows of a previous
    /// [`SdfNetwork::values`] call, recorded so that parameter gradients
    /// flow through them.
    pub fn gradients(
        &self,
        tape: &mut Tape,
        params: &[Var],
        preacts: &[Tensor],
        rows: &[usize],
    ) -> Result<Var> {
        let picked: Vec<Tensor> = preacts.iter().map(|z| select_rows(z, rows)).collect();
        self.mlp.input_gradient(tape, params, rows.len(), &picked)
    }

    pub fn eval_and_grad(
        &self,
        tape: &mut Tape,
        params: &[Var],
        points: &[Point3],
    ) -> Result<SdfEval> {
        let (values, pre) = self.values(tape, params, points)?;
        let rows: Vec<usize> = (0..points.len()).collect();
        let gradients = self.gradients(tape, params, &pre, &rows)?;
        Ok(SdfEval { values, gradients })
    }

    /// Read-only view as a [`ScalarField`].
    pub fn field<'a>(&'a self, store: &'a ParamStore) -> NetworkField<'a> {
        NetworkField { net: self, store }
    }
}

pub(crate) fn points_tensor(points: &[Point3]) -> Tensor {
    Tensor::new(points.len(), 3, points.iter().flatten().copied().collect())
}

pub(crate) fn select_rows(t: &Tensor, rows: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(rows.len() * t.cols());
    for &r in rows {
        data.extend_from_slice(t.row(r));
    }
    Tensor::new(rows.len(), t.cols(), data)
}

/// An [`SdfNetwork`] with fixed parameters.
#[derive(Clone, Copy, Debug)]
pub struct NetworkField<'a> {
    net: &'a SdfNetwork,
    store: &'a ParamStore,
}

impl ScalarField for NetworkField<'_> {
    fn eval(&self, points: &[Point3]) -> Result<(Vec<f64>, Vec<Point3>)> {
        let mut values = Vec::with_capacity(points.len());
        let mut grads = Vec::with_capacity(points.len());
        for chunk in points.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let p = tape.bind(self.store)?;
            let e = self.net.eval_and_grad(&mut tape, &p, chunk)?;
            values.extend_from_slice(tape.value(e.values).data());
            grads.extend(tape.value(e.gradients).to_points());
        }
        Ok((values, grads))
    }

    fn values(&self, points: &[Point3]) -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(points.len());
        for chunk in points.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let p = tape.bind(self.store)?;
            let (v, _) = self.net.values(&mut tape, &p, chunk)?;
            values.extend_from_slice(tape.value(v).data());
        }
        Ok(values)
    }
}
