//! Linearized Bregman iterations for sparse training.
//!
//! Each sparsifiable parameter `θ` carries a dual variable `u`; gradient
//! steps move `u`, and the primal is always recovered as the ℓ1 proximal map
//! `θ = shrink(u, λ)`. Entries start inactive (`|u| ≤ λ`) and only become
//! nonzero once accumulated gradients push `u` past the threshold.
//! Parameters that are not sparsifiable are updated directly.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{check_grads, AdamConfig, AdamState, Optimizer};
use crate::error::{Error, Result};
use crate::models::ParamSpec;
use crate::rng::Philox;
use crate::tensor::Tensor;

/// `sign(u) · max(|u| − λ, 0)`.
pub fn shrink(u: f64, lambda: f64) -> f64 {
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        0.0
    }
}

pub fn soft_threshold(u: &Tensor, lambda: f64) -> Tensor {
    u.map(|x| shrink(x, lambda))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BregmanState {
    pub lambda: f64,
    /// Initial nonzero fraction used by [`sparse_init`].
    pub r0: f64,
    /// Dual variables; `None` for dense (non-sparsifiable) parameters.
    pub duals: Vec<Option<Tensor>>,
    /// Moments for the adaptive variant, tracking the duals (or the
    /// parameters themselves when dense).
    pub adam: AdamState,
}

/// Sparse initialization: a random fraction `r0` of each sparsifiable
/// tensor keeps its initial value through a dual `u = sign(θ)(λ + |θ|)`;
/// the remaining entries get `u ~ U[−λ, λ)` and a zero primal.
///
/// `params` are overwritten with the resulting primal values.
pub fn sparse_init(
    params: &mut [&mut Tensor],
    specs: &[ParamSpec],
    r0: f64,
    lambda: f64,
    seed: u64,
    adam: AdamConfig,
) -> Result<BregmanState> {
    if !(r0 > 0.0 && r0 <= 1.0) {
        return Err(Error::InvalidArgument(format!("initial nonzero fraction {r0} not in (0, 1]")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold lambda must be positive, got {lambda}")));
    }
    if params.len() != specs.len() {
        return Err(Error::InvalidArgument(format!("{} parameters but {} specs", params.len(), specs.len())));
    }
    let mut rng = Philox::new(seed, 2);
    let mut duals = Vec::with_capacity(params.len());
    for (p, spec) in params.iter_mut().zip(specs) {
        if !spec.sparsifiable {
            duals.push(None);
            continue;
        }
        let mut u = Tensor::zeros(p.shape());
        for (theta, ui) in p.data_mut().iter_mut().zip(u.data_mut()) {
            if rng.bernoulli(r0) {
                let sign = if *theta < 0.0 { -1.0 } else { 1.0 };
                *ui = sign * (lambda + theta.abs());
            } else {
                *ui = rng.uniform(-lambda, lambda);
            }
            *theta = shrink(*ui, lambda);
        }
        duals.push(Some(u));
    }
    let adam = AdamState::new(specs.iter().map(|s| (s.name.clone(), s.shape.as_slice())), adam);
    Ok(BregmanState { lambda, r0, duals, adam })
}

impl BregmanState {
    fn names(&self) -> &[String] {
        &self.adam.names
    }

    fn apply(&mut self, params: &mut [&mut Tensor], increments: &[Tensor]) {
        let lambda = self.lambda;
        for ((p, dual), inc) in params.iter_mut().zip(self.duals.iter_mut()).zip(increments) {
            match dual {
                Some(u) => {
                    for ((ui, th), d) in u.data_mut().iter_mut().zip(p.data_mut()).zip(inc.data()) {
                        *ui -= d;
                        *th = shrink(*ui, lambda);
                    }
                }
                None => {
                    for (th, d) in p.data_mut().iter_mut().zip(inc.data()) {
                        *th -= d;
                    }
                }
            }
        }
    }

    /// `u ← u − τ ∇L(θ)`, `θ ← shrink(u, λ)`.
    pub fn linbreg_step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], tau: f64) -> Result<()> {
        check_grads(self.names(), params, grads)?;
        let inc: Vec<Tensor> = grads.iter().map(|g| g.map(|x| tau * x)).collect();
        self.apply(params, &inc);
        Ok(())
    }

    /// Adam-normalized dual step, then `θ ← shrink(u, λ)`.
    pub fn adabreg_step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        check_grads(self.names(), params, grads)?;
        let inc = self.adam.increments(grads, lr);
        self.apply(params, &inc);
        Ok(())
    }

    /// Entries with `|u| > λ`, over sparsifiable parameters.
    pub fn active_count(&self) -> usize {
        self.duals.iter().flatten().map(|u| u.data().iter().filter(|x| x.abs() > self.lambda).count()).sum()
    }

    /// Total entries of sparsifiable parameters.
    pub fn sparsifiable_count(&self) -> usize {
        self.duals.iter().flatten().map(Tensor::len).sum()
    }
}

/// Selects which Bregman update a [`BregmanState`] performs as an [`Optimizer`].
#[derive(Clone, Debug, PartialEq)]
pub struct LinBreg(pub BregmanState);

/// Adaptive (Adam-normalized) Bregman updates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaBreg(pub BregmanState);

impl Optimizer for LinBreg {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        self.0.linbreg_step(params, grads, lr)
    }
}

impl Optimizer for AdaBreg {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        self.0.adabreg_step(params, grads, lr)
    }
}
