//! Named parameter storage shared by all tapes of a model.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type ParamId = usize;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Flat store of named parameter arrays. Tapes borrow it immutably during
/// forward/backward; gradients are merged back by the training thread.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> ParamId {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "param {name}: shape/data mismatch"
        );
        let id = self.params.len();
        let n = data.len();
        self.params.push(Param {
            name: name.to_string(),
            shape,
            data,
            grad: vec![0.0; n],
        });
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// Truncated normal init (resample outside 2 sigma), std 0.02.
    pub fn add_init(&mut self, name: &str, shape: Vec<usize>, rng: &mut ChaCha8Rng) -> ParamId {
        let n = shape.iter().product();
        let std = 0.02;
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let u1: f64 = rng.gen::<f64>().max(1e-12);
            let u2: f64 = rng.gen();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            if z.abs() <= 2.0 {
                data.push(z * std);
            }
        }
        self.add(name, shape, data)
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![0.0; n])
    }

    pub fn add_ones(&mut self, name: &str, shape: Vec<usize>) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![1.0; n])
    }

    /// Register `alias` as another name for an existing parameter.
    pub fn alias(&mut self, alias: &str, target: &str) -> Result<()> {
        let id = self.id(target)?;
        self.by_name.insert(alias.to_string(), id);
        Ok(())
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::contract(format!("unknown parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    /// True when two names resolve to the same storage.
    pub fn is_aliased(&self, a: &str, b: &str) -> bool {
        match (self.by_name.get(a), self.by_name.get(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }

    /// Re-point `name` at a fresh copy of its current storage.
    pub fn unalias(&mut self, name: &str) -> Result<ParamId> {
        let old = self.id(name)?;
        let mut p = self.params[old].clone();
        p.name = name.to_string();
        let id = self.params.len();
        self.params.push(p);
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Storage ids in insertion order, deduplicated against aliases.
    pub fn ids(&self) -> std::ops::Range<ParamId> {
        0..self.params.len()
    }

    /// Canonical name for each storage slot (the name it was added under).
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Merge per-tape gradient buffers (indexed by ParamId) into the store.
    pub fn accumulate_grads(&mut self, grads: &[Option<Vec<f64>>]) {
        for (id, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                let dst = &mut self.params[id].grad;
                for (d, s) in dst.iter_mut().zip(g) {
                    *d += s;
                }
            }
        }
    }

    pub fn grad_global_norm(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.grad.iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, c: f64) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= c);
        }
    }
}
