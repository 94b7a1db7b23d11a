//! Raster deep decoder: `B_{i+1} = cn(relu(U_i B_i C_i))`, `I = sigmoid(B_d C_d)`.
//!
//! Rasters are carried as `(n·n) x k` matrices in row-major pixel order so
//! channel mixing is a plain matrix product. Mixing runs before the 2x
//! bilinear upsampling, which is equivalent since both maps are linear and
//! act on different axes.

use alloc::format;
use alloc::vec::Vec;

use super::{register, uniform_tensor, Activation, NormMode, ParamSpec, Parametric, Recorded};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::rng::Philox;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct DeepDecoderConfig {
    /// Side of the fixed input raster.
    pub n0: usize,
    /// Number of upsampling layers.
    pub depth: usize,
    pub width: usize,
    pub out_channels: usize,
    pub activation: Activation,
    pub norm_eps: f64,
    pub seed: u64,
}

impl DeepDecoderConfig {
    pub fn new(n0: usize, depth: usize, width: usize, out_channels: usize, seed: u64) -> Self {
        Self { n0, depth, width, out_channels, activation: Activation::Relu, norm_eps: 1e-5, seed }
    }

    /// Side of the output raster, `n0 · 2^depth`.
    pub fn output_side(&self) -> usize {
        self.n0 << self.depth
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeepDecoderModel {
    pub config: DeepDecoderConfig,
    /// Fixed random input raster, `(n0·n0) x k`.
    pub b0: Tensor,
    /// `(C_i: k x k, γ_i, β_i)` per layer.
    pub layers: Vec<(Tensor, Tensor, Tensor)>,
    /// Output mixing `k x k_d`.
    pub head: Tensor,
}

impl DeepDecoderModel {
    pub fn new(config: DeepDecoderConfig) -> Result<Self> {
        let DeepDecoderConfig { n0, depth, width: k, out_channels, .. } = config;
        if n0 == 0 || k == 0 || out_channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "deep decoder needs positive n0, width and outputs, got n0={n0} k={k} out={out_channels}"
            )));
        }
        let mut rng = Philox::new(config.seed, 0);
        let mut b0_rng = Philox::new(config.seed, 1);
        let b0 = uniform_tensor(&[n0 * n0, k], 1.0, &mut b0_rng);
        let cb = 1.0 / libm::sqrt(k as f64);
        let layers = (0..depth)
            .map(|_| (uniform_tensor(&[k, k], cb, &mut rng), Tensor::full(&[k], 1.0), Tensor::zeros(&[k])))
            .collect();
        let head = uniform_tensor(&[k, out_channels], cb, &mut rng);
        Ok(Self { config, b0, layers, head })
    }

    /// Records the forward pass; the output is the `(side·side) x k_d`
    /// raster, `side = n0 · 2^depth`.
    pub fn record(&self, tape: &mut Tape, norm: NormMode<'_>) -> Result<Recorded> {
        let params = register(tape, &self.params());
        let mut h = tape.constant(self.b0.clone());
        let mut side = self.config.n0;
        let mut norm_stats = Vec::with_capacity(self.layers.len());
        for i in 0..self.layers.len() {
            let z = tape.matmul(h, params[3 * i])?;
            let u = tape.bilinear_upsample(z, side, side)?;
            side *= 2;
            let a = self.config.activation.apply(tape, u);
            let (out, stats) =
                tape.channel_norm(a, params[3 * i + 1], params[3 * i + 2], self.config.norm_eps, norm.layer(i)?)?;
            norm_stats.push(stats);
            h = out;
        }
        let logits = tape.matmul(h, params[params.len() - 1])?;
        let output = tape.sigmoid(logits);
        Ok(Recorded { output, params, norm_stats })
    }

    /// Output raster as `side x side x k_d`.
    pub fn evaluate(&self) -> Result<Tensor> {
        let mut tape = Tape::new();
        let rec = self.record(&mut tape, NormMode::Batch)?;
        let side = self.config.output_side();
        tape.value(rec.output).reshape(&[side, side, self.config.out_channels])
    }
}

impl Parametric for DeepDecoderModel {
    fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        for (i, (c, g, b)) in self.layers.iter().enumerate() {
            for (name, t, sparse) in [("c", c, true), ("gamma", g, false), ("beta", b, false)] {
                specs.push(ParamSpec {
                    name: format!("layers.{i}.{name}"),
                    shape: t.shape().to_vec(),
                    sparsifiable: sparse,
                });
            }
        }
        specs.push(ParamSpec { name: "head".into(), shape: self.head.shape().to_vec(), sparsifiable: true });
        specs
    }

    fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.layers.iter().flat_map(|(c, g, b)| [c, g, b]).collect();
        out.push(&self.head);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.layers.iter_mut().flat_map(|(c, g, b)| [c, g, b]).collect();
        out.push(&mut self.head);
        out
    }

    fn frozen(&self) -> Vec<(&'static str, &Tensor)> {
        alloc::vec![("b0", &self.b0)]
    }

    fn frozen_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        alloc::vec![("b0", &mut self.b0)]
    }
}
