//! Adam with bias correction over a [`ParamStore`].

use crate::error::{Error, Result};
use crate::tensor::store::ParamStore;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// per-parameter first/second moments, indexed by ParamId
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let m = store.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        let v = store.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        AdamState {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m,
            v,
        }
    }

    /// One update over every parameter. Requires a gradient for each;
    /// grads are zeroed afterwards.
    pub fn apply(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        for (id, p) in store.iter() {
            if p.grad.len() != p.numel() {
                return Err(Error::contract(format!(
                    "adam_step: missing grad for parameter {:?}",
                    p.name
                )));
            }
            if self.m[id].len() != p.numel() {
                return Err(Error::contract(format!(
                    "adam_step: state shape mismatch for parameter {:?}",
                    p.name
                )));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for id in store.ids() {
            let m = &mut self.m[id];
            let v = &mut self.v[id];
            let p = store.get_mut(id);
            for ((w, g), (mi, vi)) in p
                .data
                .iter_mut()
                .zip(&p.grad)
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + self.eps);
            }
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        Ok(())
    }
}
