//! Image representations: TITAN, SIREN and the raster deep decoder.

mod deep_decoder;
mod siren;
mod titan;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{NormStats, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Philox;
use crate::tensor::Tensor;

pub use deep_decoder::{DeepDecoderConfig, DeepDecoderModel};
pub use siren::{SirenConfig, SirenModel};
pub use titan::{TitanConfig, TitanLayer, TitanModel};

/// Name, shape and sparsity role of one trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Weight matrices take part in Bregman sparsification; biases and
    /// normalization affines stay dense.
    pub sparsifiable: bool,
}

/// Hidden-layer nonlinearity for the decoder models.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Relu,
    Softplus,
}

impl Activation {
    pub(crate) fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Softplus => tape.softplus(x),
        }
    }
}

/// Where channel normalization takes its statistics from.
#[derive(Clone, Copy, Debug)]
pub enum NormMode<'a> {
    /// Recompute over the rows of the current batch.
    Batch,
    /// Reuse previously recorded statistics, one entry per normalized layer.
    Frozen(&'a [NormStats]),
}

impl<'a> NormMode<'a> {
    pub(crate) fn layer(&self, i: usize) -> Result<Option<&'a NormStats>> {
        match self {
            NormMode::Batch => Ok(None),
            NormMode::Frozen(s) => {
                s.get(i).map(Some).ok_or_else(|| Error::InvalidArgument(format!("no frozen statistics for layer {i}")))
            }
        }
    }
}

/// Result of recording a model forward pass on a tape.
pub struct Recorded {
    pub output: Var,
    /// One var per trainable tensor, in [`Parametric::params`] order.
    pub params: Vec<Var>,
    /// Channel-norm statistics used by each layer.
    pub norm_stats: Vec<NormStats>,
}

/// A container of named trainable tensors.
pub trait Parametric {
    fn param_specs(&self) -> Vec<ParamSpec>;
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    /// Fixed (never trained) tensors, by name.
    fn frozen(&self) -> Vec<(&'static str, &Tensor)> {
        Vec::new()
    }

    fn frozen_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        Vec::new()
    }

    fn trainable_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn frozen_count(&self) -> usize {
        self.frozen().iter().map(|(_, t)| t.len()).sum()
    }

    fn nonzero_count(&self) -> usize {
        self.params().iter().map(|t| t.count_nonzero()).sum()
    }
}

/// A grid-free model mapping `N x 2` coordinates to `N x k_d` values.
pub trait CoordinateModel: Parametric {
    fn out_channels(&self) -> usize;

    fn record(&self, tape: &mut Tape, coords: Var, norm: NormMode<'_>) -> Result<Recorded>;

    /// Forward pass without keeping the tape.
    fn evaluate(&self, coords: &Tensor, norm: NormMode<'_>) -> Result<(Tensor, Vec<NormStats>)> {
        let mut tape = Tape::new();
        let c = tape.constant(coords.clone());
        let rec = self.record(&mut tape, c, norm)?;
        Ok((tape.value(rec.output).clone(), rec.norm_stats))
    }
}

pub(crate) fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut Philox) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|x| *x = rng.uniform(-bound, bound));
    t
}

pub(crate) fn register(tape: &mut Tape, params: &[&Tensor]) -> Vec<Var> {
    params.iter().map(|p| tape.param((*p).clone())).collect()
}
