use std::collections::BTreeMap;

use rand::Rng as _;

use crate::error::{Result, TensorError};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
    pub has_grad: bool,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

/// Named trainable tensors plus optimizer state. Names are unique and
/// shapes never change after creation.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    index: BTreeMap<String, usize>,
    params: Vec<Param>,
    adam_step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        let n = value.numel();
        let id = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            value: value.with_requires_grad(true),
            grad: vec![0.0; n],
            has_grad: false,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Glorot-uniform matrix of shape `[fan_in, fan_out]`.
    pub fn insert_glorot(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<usize> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.insert_uniform(name, &[fan_in, fan_out], bound, rng)
    }

    pub fn insert_uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut Rng) -> Result<usize> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn insert_zeros(&mut self, name: &str, shape: &[usize]) -> Result<usize> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.params[self.id(name)?].value)
    }

    /// Overwrites the values of an existing parameter; the shape must match.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self.id(name)?;
        let p = &mut self.params[id];
        if p.value.shape() != value.shape() {
            return Err(TensorError::ShapeMismatch {
                expected: p.value.shape().to_vec(),
                got: value.shape().to_vec(),
            });
        }
        p.value = value.with_requires_grad(true);
        Ok(())
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn adam_step_count(&self) -> u64 {
        self.adam_step
    }

    pub(crate) fn set_adam_step_count(&mut self, step: u64) {
        self.adam_step = step;
    }

    pub fn grad(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.params[self.id(name)?].grad)
    }

    pub(crate) fn add_grad(&mut self, id: usize, g: &[f64]) {
        let p = &mut self.params[id];
        for (a, b) in p.grad.iter_mut().zip(g) {
            *a += b;
        }
        p.has_grad = true;
    }

    /// Sets the gradient of `name` directly, for optimizers driven by
    /// externally computed gradients.
    pub fn set_grad(&mut self, name: &str, g: &[f64]) -> Result<()> {
        let id = self.id(name)?;
        let p = &mut self.params[id];
        if g.len() != p.grad.len() {
            return Err(TensorError::ShapeMismatch {
                expected: p.value.shape().to_vec(),
                got: vec![g.len()],
            });
        }
        p.grad.copy_from_slice(g);
        p.has_grad = true;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
            p.has_grad = false;
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= factor);
        }
    }

    fn check_grads(&self) -> Result<()> {
        match self.params.iter().find(|p| !p.has_grad) {
            Some(p) => Err(TensorError::MissingGradient(p.name.clone())),
            None => Ok(()),
        }
    }

    /// `w ← w − lr·g`, then clears gradients.
    pub fn sgd_step(&mut self, lr: f64) -> Result<()> {
        self.check_grads()?;
        for p in &mut self.params {
            for (w, g) in p.value.data_mut().iter_mut().zip(&p.grad) {
                *w -= lr * g;
            }
        }
        self.zero_grad();
        Ok(())
    }

    /// Bias-corrected Adam with β = (0.9, 0.999), ε = 1e-8, then clears
    /// gradients.
    pub fn adam_step(&mut self, lr: f64) -> Result<()> {
        self.check_grads()?;
        self.adam_step += 1;
        let t = self.adam_step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for p in &mut self.params {
            let Param {
                value,
                grad,
                adam_m,
                adam_v,
                ..
            } = p;
            for (((w, &g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.iter())
                .zip(adam_m.iter_mut())
                .zip(adam_v.iter_mut())
            {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        self.zero_grad();
        Ok(())
    }

    /// Puts every parameter on `tape`. Trainable bindings collect gradients
    /// that [`crate::Gradients::accumulate_into`] adds back into this store.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(id, p)| tape.bind_param(p.value.clone(), id, trainable))
            .collect();
        Bound {
            index: self.index.clone(),
            vars,
        }
    }
}

/// Parameter handles for one tape.
#[derive(Debug, Clone)]
pub struct Bound {
    index: BTreeMap<String, usize>,
    vars: Vec<Var>,
}

impl Bound {
    /// Handles for variables already on a tape, e.g. perturbed copies of
    /// parameters in a finite-difference check.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        let mut index = BTreeMap::new();
        let mut vars = Vec::new();
        for (name, v) in pairs {
            index.insert(name, vars.len());
            vars.push(v);
        }
        Bound { index, vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }
}
