use super::params::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// RMSprop with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub decay: f64,
    pub epsilon: f64,
    acc: Vec<Tensor>,
}

impl RmsProp {
    pub const DEFAULT_DECAY: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(store: &ParamStore, decay: f64, epsilon: f64) -> Self {
        let acc = store
            .iter()
            .map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols()))
            .collect();
        RmsProp {
            decay,
            epsilon,
            acc,
        }
    }

    pub fn accumulator(&self, index: usize) -> &Tensor {
        &self.acc[index]
    }

    /// One update of every parameter:
    /// `g = grad + l2 * v; acc = decay * acc + (1 - decay) * g^2;
    /// v -= lr * g / sqrt(acc + eps)`.
    ///
    /// Nothing is written if any updated value would be non-finite.
    /// Gradients are zeroed on success.
    pub fn step(&mut self, store: &mut ParamStore, grads: &mut Gradients, lr: f64, l2: f64) -> Result<()> {
        let mut updates = Vec::with_capacity(store.len());
        for (id, param) in store.iter() {
            let value = param.value.data();
            let grad = grads.get(id).map(Tensor::data);
            let acc = self.acc[id.index()].data();
            let mut new_acc = Vec::with_capacity(value.len());
            let mut new_value = Vec::with_capacity(value.len());
            for i in 0..value.len() {
                let g = grad.map_or(0.0, |g| g[i]) + l2 * value[i];
                let a = self.decay * acc[i] + (1.0 - self.decay) * g * g;
                let v = if g == 0.0 {
                    value[i]
                } else {
                    value[i] - lr * g / (a + self.epsilon).sqrt()
                };
                if !v.is_finite() || !a.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "rmsprop update of parameter {} at entry {i}",
                        param.name
                    )));
                }
                new_acc.push(a);
                new_value.push(v);
            }
            updates.push((new_acc, new_value));
        }
        for ((id, (new_acc, new_value)), acc) in store.ids().zip(updates).zip(&mut self.acc) {
            acc.data_mut().copy_from_slice(&new_acc);
            store.value_mut(id).data_mut().copy_from_slice(&new_value);
        }
        grads.zero();
        Ok(())
    }
}
