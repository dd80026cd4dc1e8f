//! Adam with bias correction and one learning rate per parameter group.

use crate::autodiff::Parameter;
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning rate of each group.
    pub group_lr: Vec<f64>,
    /// Group index of each parameter.
    groups: Vec<usize>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    /// `groups[i]` selects the entry of `group_lr` used for parameter `i`.
    pub fn new(params: &[Parameter], groups: Vec<usize>, group_lr: Vec<f64>) -> Result<Self> {
        if groups.len() != params.len() {
            return Err(invalid(format!(
                "{} group assignments for {} parameters",
                groups.len(),
                params.len()
            )));
        }
        if let Some(g) = groups.iter().find(|g| **g >= group_lr.len()) {
            return Err(invalid(format!("group {g} has no learning rate")));
        }
        if let Some(lr) = group_lr.iter().find(|lr| !(**lr > 0.0 && lr.is_finite())) {
            return Err(invalid(format!("learning rate must be > 0, got {lr}")));
        }
        let zeros = |p: &Parameter| Tensor::from_parts(p.value.dims(), vec![0.0; p.value.len()]);
        Ok(Self {
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            group_lr,
            groups,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            step: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Every parameter needs a gradient of its own shape.
    pub fn step(&mut self, params: &mut [Parameter], grads: &[Option<Tensor>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(invalid("parameter list does not match the optimizer state"));
        }
        for (p, g) in params.iter().zip(grads) {
            match g {
                None => return Err(Error::MissingGradient(p.name.clone())),
                Some(g) => g.ensure_shape(p.value.dims())?,
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].as_ref().expect("checked above").as_slice();
            let lr = self.group_lr[self.groups[i]];
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            for (j, x) in p.value.as_mut_slice().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
