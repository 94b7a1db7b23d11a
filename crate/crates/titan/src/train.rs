//! The training loop shared by every task.

use std::sync::Arc;

use titan_core::autodiff::{NormStats, Tape, Var};
use titan_core::models::{NormMode, ParamSpec};
use titan_core::operators::RadonOperator;
use titan_core::optim::{sparse_init, AdamConfig, AdamState, BregmanState, CosineSchedule, Optimizer};
use titan_core::Tensor;

use crate::config::{ExperimentConfig, OptimizerKind, Schedule};
use crate::error::{HarnessError, Result};
use crate::model::AnyModel;

/// What the network output is compared against.
pub enum Objective {
    /// Mean squared error between the rows predicted at `coords` and `target`
    /// (`N x k_d`).
    Fit { coords: Tensor, target: Tensor },
    /// Mean squared error between the box-downsampled raster output
    /// (`side x side`, reduced by `factor`) and the low-resolution `target`
    /// rows. Used for raster models, which have no coordinates to query.
    FitDownsampled { target: Tensor, side: usize, factor: usize },
    /// `‖RT(I) − B‖²_F` with the image rendered on the full `size x size`
    /// grid (`coords` is `None` for raster models).
    Ct { coords: Option<Tensor>, op: Arc<RadonOperator>, sino: Tensor, size: usize },
}

impl Objective {
    fn record(&self, model: &AnyModel, tape: &mut Tape) -> Result<(Var, Vec<Var>, Vec<NormStats>)> {
        match self {
            Objective::Fit { coords, target } => {
                let c = tape.constant(coords.clone());
                let rec = model.record(tape, Some(c), NormMode::Batch)?;
                let loss = mse(tape, rec.output, target)?;
                Ok((loss, rec.params, rec.norm_stats))
            }
            Objective::FitDownsampled { target, side, factor } => {
                let rec = model.record(tape, None, NormMode::Batch)?;
                let low = tape.downsample_box(rec.output, *side, *side, *factor)?;
                let loss = mse(tape, low, target)?;
                Ok((loss, rec.params, rec.norm_stats))
            }
            Objective::Ct { coords, op, sino, size } => {
                let c = coords.as_ref().map(|c| tape.constant(c.clone()));
                let rec = model.record(tape, c, NormMode::Batch)?;
                let img = tape.reshape(rec.output, &[*size, *size])?;
                let proj = op.record(tape, img)?;
                let b = tape.constant(sino.clone());
                let diff = tape.sub(proj, b)?;
                let loss = tape.sum_of_squares(diff);
                Ok((loss, rec.params, rec.norm_stats))
            }
        }
    }
}

fn mse(tape: &mut Tape, out: Var, target: &Tensor) -> Result<Var> {
    let t = tape.constant(target.clone());
    let diff = tape.sub(out, t)?;
    let ss = tape.sum_of_squares(diff);
    Ok(tape.scale(ss, 1.0 / target.len() as f64))
}

/// Optimizer state for one run; Bregman variants carry the duals.
#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerState {
    Adam(AdamState),
    LinBreg(BregmanState),
    AdaBreg(BregmanState),
}

impl OptimizerState {
    /// Fresh state for `model`. Bregman variants re-initialize the model
    /// sparsely (seeded by the config seed).
    pub fn init(cfg: &ExperimentConfig, model: &mut AnyModel) -> Result<Self> {
        let specs = model.param_specs();
        let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
        Ok(match cfg.optimizer {
            OptimizerKind::Adam => {
                OptimizerState::Adam(AdamState::new(specs.iter().map(|s| (s.name.clone(), s.shape.as_slice())), adam))
            }
            kind => {
                let mut params = model.parametric_mut().params_mut();
                let st = sparse_init(&mut params, &specs, cfg.r0, cfg.lambda, cfg.seed, adam)?;
                if kind == OptimizerKind::Linbreg {
                    OptimizerState::LinBreg(st)
                } else {
                    OptimizerState::AdaBreg(st)
                }
            }
        })
    }

    pub fn bregman(&self) -> Option<&BregmanState> {
        match self {
            OptimizerState::Adam(_) => None,
            OptimizerState::LinBreg(s) | OptimizerState::AdaBreg(s) => Some(s),
        }
    }

    pub fn bregman_mut(&mut self) -> Option<&mut BregmanState> {
        match self {
            OptimizerState::Adam(_) => None,
            OptimizerState::LinBreg(s) | OptimizerState::AdaBreg(s) => Some(s),
        }
    }

    pub fn adam(&self) -> &AdamState {
        match self {
            OptimizerState::Adam(a) => a,
            OptimizerState::LinBreg(s) | OptimizerState::AdaBreg(s) => &s.adam,
        }
    }

    pub fn adam_mut(&mut self) -> &mut AdamState {
        match self {
            OptimizerState::Adam(a) => a,
            OptimizerState::LinBreg(s) | OptimizerState::AdaBreg(s) => &mut s.adam,
        }
    }

    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> titan_core::Result<()> {
        match self {
            OptimizerState::Adam(a) => a.step(params, grads, lr),
            OptimizerState::LinBreg(s) => s.linbreg_step(params, grads, lr),
            OptimizerState::AdaBreg(s) => s.adabreg_step(params, grads, lr),
        }
    }
}

pub fn learning_rate(cfg: &ExperimentConfig, epoch: usize) -> f64 {
    match cfg.schedule {
        Schedule::Constant => cfg.lr,
        Schedule::Cosine => CosineSchedule { lr_max: cfg.lr, lr_min: cfg.lr_min, total: cfg.epochs }.lr(epoch),
    }
}

pub struct TrainOutcome {
    /// Loss before each epoch's update.
    pub loss_curve: Vec<f64>,
    pub optimizer: OptimizerState,
    /// Normalization statistics of the last training forward pass.
    pub norm_stats: Vec<NormStats>,
}

/// Hook called after every update with the epoch, its loss and the state.
pub trait StepObserver {
    fn after_step(&mut self, epoch: usize, loss: f64, model: &AnyModel, optimizer: &OptimizerState);
}

impl StepObserver for () {
    fn after_step(&mut self, _: usize, _: f64, _: &AnyModel, _: &OptimizerState) {}
}

/// Runs `cfg.epochs` full-batch updates of `model` against `objective`.
pub fn train(
    model: &mut AnyModel,
    objective: &Objective,
    cfg: &ExperimentConfig,
    observer: &mut dyn StepObserver,
) -> Result<TrainOutcome> {
    let mut optimizer = OptimizerState::init(cfg, model)?;
    let specs: Vec<ParamSpec> = model.param_specs();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut norm_stats = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let (loss, vars, stats) = objective.record(model, &mut tape)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(HarnessError::Divergence { epoch, detail: format!("loss is {value}") });
        }
        let mut grads = tape.backward(loss)?;
        let grads: Vec<Tensor> =
            vars.iter().zip(&specs).map(|(v, s)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(&s.shape))).collect();
        drop(tape);
        let lr = learning_rate(cfg, epoch);
        let mut params = model.parametric_mut().params_mut();
        optimizer.step(&mut params, &grads, lr).map_err(|e| match e {
            titan_core::Error::NonFiniteGradient(p) => {
                HarnessError::Divergence { epoch, detail: format!("non-finite gradient for `{p}`") }
            }
            other => other.into(),
        })?;
        loss_curve.push(value);
        norm_stats = stats;
        observer.after_step(epoch, value, model, &optimizer);
        if cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch + 1 == cfg.epochs) {
            eprintln!("epoch {epoch:>6}  loss {value:.6e}  lr {lr:.3e}");
        }
    }
    Ok(TrainOutcome { loss_curve, optimizer, norm_stats })
}
