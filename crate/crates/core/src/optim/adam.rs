use alloc::string::String;
use alloc::vec::Vec;

use super::{check_grads, Optimizer};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected first and second moments per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub names: Vec<String>,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = (String, &'a [usize])>, config: AdamConfig) -> Self {
        let (names, shapes): (Vec<String>, Vec<&[usize]>) = params.into_iter().unzip();
        let m: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
        Self { config, names, v: m.clone(), m, t: 0 }
    }

    /// Advances the moments with `grads` and returns, for every parameter,
    /// the increment `lr · m̂ / (√v̂ + eps)` to subtract.
    pub(crate) fn increments(&mut self, grads: &[Tensor], lr: f64) -> Vec<Tensor> {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let t = self.t as i32;
        let bc1 = 1.0 - libm::pow(beta1, t as f64);
        let bc2 = 1.0 - libm::pow(beta2, t as f64);
        let mut out = Vec::with_capacity(grads.len());
        for ((m, v), g) in self.m.iter_mut().zip(self.v.iter_mut()).zip(grads) {
            let mut inc = Tensor::zeros(g.shape());
            for (((mi, vi), gi), di) in
                m.data_mut().iter_mut().zip(v.data_mut().iter_mut()).zip(g.data()).zip(inc.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *di = lr * mhat / (libm::sqrt(vhat) + eps);
            }
            out.push(inc);
        }
        out
    }
}

impl Optimizer for AdamState {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        check_grads(&self.names, params, grads)?;
        let inc = self.increments(grads, lr);
        for (p, d) in params.iter_mut().zip(&inc) {
            for (x, dx) in p.data_mut().iter_mut().zip(d.data()) {
                *x -= dx;
            }
        }
        Ok(())
    }
}
