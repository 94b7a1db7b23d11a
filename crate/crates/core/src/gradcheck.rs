//! Central finite-difference checks for tape gradients.

use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::models::Parametric;
use crate::tensor::Tensor;

/// Max over coordinates of `|analytic − fd| / max(1, |fd|)` for a scalar
/// function of one tensor.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), core::slice::from_ref(point), step)
}

/// Like [`grad_check`] for a scalar function of several tensors; every
/// entry of every tensor is perturbed.
pub fn grad_check_many<F>(f: F, points: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |pts: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = pts.iter().map(|p| tape.constant(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = points.iter().map(|p| tape.param(p.clone())).collect();
    let root = f(&mut tape, &vars)?;
    let grads = tape.backward(root)?;

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = points.to_vec();
    for (t, var) in vars.iter().enumerate() {
        let zeros = Tensor::zeros(points[t].shape());
        let analytic = grads.get(*var).unwrap_or(&zeros);
        for i in 0..points[t].len() {
            let x0 = points[t].data()[i];
            work[t].data_mut()[i] = x0 + step;
            let up = eval(&work)?;
            work[t].data_mut()[i] = x0 - step;
            let down = eval(&work)?;
            work[t].data_mut()[i] = x0;
            let fd = (up - down) / (2.0 * step);
            let err = (analytic.data()[i] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Finite-difference check over every trainable entry of a model.
///
/// `loss` records a scalar loss and returns it with the vars of the model's
/// parameters in [`Parametric::params`] order.
pub fn grad_check_params<M, F>(model: &M, loss: F, step: f64) -> Result<f64>
where
    M: Parametric + Clone,
    F: Fn(&M, &mut Tape) -> Result<(Var, Vec<Var>)>,
{
    let mut tape = Tape::new();
    let (root, vars) = loss(model, &mut tape)?;
    let grads = tape.backward(root)?;
    let eval = |m: &M| -> Result<f64> {
        let mut t = Tape::new();
        let (r, _) = loss(m, &mut t)?;
        Ok(t.value(r).item())
    };
    let mut work = model.clone();
    let mut worst: f64 = 0.0;
    let n_params = model.params().len();
    for p in 0..n_params {
        let len = model.params()[p].len();
        let zeros = Tensor::zeros(model.params()[p].shape());
        let analytic = grads.get(vars[p]).unwrap_or(&zeros).clone();
        for i in 0..len {
            let x0 = model.params()[p].data()[i];
            work.params_mut()[p].data_mut()[i] = x0 + step;
            let up = eval(&work)?;
            work.params_mut()[p].data_mut()[i] = x0 - step;
            let down = eval(&work)?;
            work.params_mut()[p].data_mut()[i] = x0;
            let fd = (up - down) / (2.0 * step);
            worst = worst.max((analytic.data()[i] - fd).abs() / fd.abs().max(1.0));
        }
    }
    Ok(worst)
}
