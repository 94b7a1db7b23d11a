//! Adam, cosine annealing and (adaptive) linearized Bregman iterations.
//!
//! All optimizers act on the parameter list of a [`Parametric`] model in
//! [`Parametric::params`] order, with one gradient tensor per parameter.
//!
//! [`Parametric`]: crate::models::Parametric

mod adam;
mod bregman;

pub use adam::{AdamConfig, AdamState};
pub use bregman::{shrink, soft_threshold, sparse_init, AdaBreg, BregmanState, LinBreg};

use alloc::string::String;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at step `total`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub total: usize,
}

impl CosineSchedule {
    /// `lr_min + ½ (lr_max − lr_min)(1 + cos(π t / T))`, clamped to `lr_min`
    /// past the end.
    pub fn lr(&self, step: usize) -> f64 {
        if step >= self.total {
            return self.lr_min;
        }
        let phase = core::f64::consts::PI * step as f64 / self.total as f64;
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + libm::cos(phase))
    }
}

/// One update rule applied at a caller-chosen learning rate / step size.
pub trait Optimizer {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()>;
}

pub(crate) fn check_grads(names: &[String], params: &[&mut Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() || params.len() != names.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} parameters, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            names.len()
        )));
    }
    for ((name, p), g) in names.iter().zip(params).zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::InvalidArgument(alloc::format!(
                "gradient shape {:?} for parameter `{name}` of shape {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    Ok(())
}
