use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for every tensor of a [`ParamStore`], in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        AdamState {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one bias-corrected Adam update.
    ///
    /// `grads[i] == None` leaves parameter `i` and its moments untouched
    /// (used for frozen sub-networks). Every supplied gradient is checked
    /// before anything is modified, so a non-finite gradient aborts the whole
    /// step.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>]) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::invalid(format!(
                "adam: {} gradients / {} moment slots for {} parameters",
                grads.len(),
                self.m.len(),
                store.len()
            )));
        }
        for ((id, name, p), g) in store.iter().zip(grads) {
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "adam_step",
                        lhs: p.shape(),
                        rhs: g.shape(),
                    });
                }
                if !g.is_finite() {
                    return Err(Error::NonFiniteGradient(name.to_string()));
                }
                debug_assert_eq!(self.m[id.index()].len(), p.len());
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let id = super::ParamId::from_index(i);
            let p = store.tensor_mut(id).data_mut();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((p, m), v), &g) in p
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut())
                .zip(g.data())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> (ParamStore, AdamState) {
        let mut store = ParamStore::new();
        store.add("x", Tensor::scalar(value));
        let state = AdamState::new(
            &store,
            AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
        );
        (store, state)
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let (mut store, mut state) = single(1.5);
        for _ in 0..10 {
            state
                .step(&mut store, &[Some(Tensor::scalar(0.0))])
                .unwrap();
        }
        assert_eq!(store.flatten(), vec![1.5]);
        assert_eq!(state.t, 10);
    }

    #[test]
    fn first_step_closed_form() {
        // m = 0.1, v = 0.001; bias-corrected m̂ = 1, v̂ = 1
        let (mut store, mut state) = single(0.0);
        state
            .step(&mut store, &[Some(Tensor::scalar(1.0))])
            .unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((store.flatten()[0] - expected).abs() < 1e-15);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        let (mut store, mut state) = single(0.0);
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..2000 {
            state
                .step(&mut store, &[Some(Tensor::scalar(-3.0))])
                .unwrap();
            let x = store.flatten()[0];
            last_step = x - prev;
            prev = x;
        }
        assert!((last_step - 0.1).abs() < 1e-6, "{last_step}");
    }

    #[test]
    fn non_finite_gradient_aborts_with_name() {
        let (mut store, mut state) = single(2.0);
        let err = state
            .step(&mut store, &[Some(Tensor::scalar(f64::INFINITY))])
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "x"));
        assert_eq!(state.t, 0);
        assert_eq!(store.flatten(), vec![2.0]);
    }
}
