//! TITAN: a deep decoder evaluated pointwise, with the upsampling operator
//! replaced by sinusoidal spatial residuals.
//!
//! Layer `i` maps `B_i(x) ∈ R^k` to
//!
//! ```text
//! B_{i+1}(x) = cn(relu(C_i B_i(x) + sin(α_i (W_i x + v_i)) / d))
//! ```
//!
//! starting from a fixed random vector `B_0`, and the output is
//! `sigmoid(C_d B_d(x))`. Channel normalization runs over the batch of
//! coordinates passed to one forward call.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{register, uniform_tensor, Activation, CoordinateModel, NormMode, ParamSpec, Parametric, Recorded};
use crate::autodiff::{NormStats, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Philox;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TitanConfig {
    /// Number of residual layers `d`.
    pub depth: usize,
    /// Channel count `k` shared by `B_0 .. B_d`.
    pub width: usize,
    pub out_channels: usize,
    /// Frequency scale per layer: `α_i = alpha_step · (i + 1)`.
    pub alpha_step: f64,
    pub activation: Activation,
    pub norm_eps: f64,
    pub seed: u64,
}

impl TitanConfig {
    pub fn new(depth: usize, width: usize, out_channels: usize, seed: u64) -> Self {
        Self { depth, width, out_channels, alpha_step: 4.0, activation: Activation::Relu, norm_eps: 1e-5, seed }
    }

    pub fn alpha(&self, layer: usize) -> f64 {
        self.alpha_step * (layer + 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TitanLayer {
    /// Channel mixing, `k_{i+1} x k_i`.
    pub c: Tensor,
    /// Spatial frequencies, `k_{i+1} x 2`.
    pub w: Tensor,
    /// Phases, `k_{i+1}`.
    pub v: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TitanModel {
    pub config: TitanConfig,
    /// Fixed input vector, stored as `1 x k_0`.
    pub b0: Tensor,
    pub layers: Vec<TitanLayer>,
    /// Output mixing, `k_d x k`.
    pub head: Tensor,
}

impl TitanModel {
    /// Seeded initialization: `B_0 ~ U(−1, 1)` (stream 1) and every trainable
    /// weight `~ U(−1/√fan_in, 1/√fan_in)` (stream 0), with `γ = 1`, `β = 0`.
    pub fn new(config: TitanConfig) -> Result<Self> {
        let TitanConfig { depth, width: k, out_channels, .. } = config;
        if depth == 0 || k == 0 || out_channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "TITAN needs positive depth, width and outputs, got d={depth} k={k} out={out_channels}"
            )));
        }
        let mut rng = Philox::new(config.seed, 0);
        let mut b0_rng = Philox::new(config.seed, 1);
        let b0 = uniform_tensor(&[1, k], 1.0, &mut b0_rng);
        let cb = 1.0 / libm::sqrt(k as f64);
        let wb = 1.0 / libm::sqrt(2.0);
        let layers = (0..depth)
            .map(|i| TitanLayer {
                c: uniform_tensor(&[k, k], cb, &mut rng),
                w: uniform_tensor(&[k, 2], wb, &mut rng),
                v: uniform_tensor(&[k], wb, &mut rng),
                gamma: Tensor::full(&[k], 1.0),
                beta: Tensor::zeros(&[k]),
                alpha: config.alpha(i),
            })
            .collect();
        let head = uniform_tensor(&[out_channels, k], cb, &mut rng);
        Ok(Self { config, b0, layers, head })
    }

    /// `sin(α_i (x W_iᵀ + v_i)) / d` for every coordinate row.
    pub fn residual(&self, layer: usize, coords: &Tensor) -> Result<Tensor> {
        let l = self
            .layers
            .get(layer)
            .ok_or_else(|| Error::InvalidArgument(format!("layer {layer} of a depth-{} model", self.layers.len())))?;
        let mut tape = Tape::new();
        let x = tape.constant(coords.clone());
        let w = tape.constant(l.w.clone());
        let v = tape.constant(l.v.clone());
        let r = self.record_residual(&mut tape, layer, x, w, v)?;
        Ok(tape.value(r).clone())
    }

    fn record_residual(&self, tape: &mut Tape, layer: usize, x: Var, w: Var, v: Var) -> Result<Var> {
        let alpha = self.layers[layer].alpha;
        let p = tape.matmul_t(x, w)?;
        let p = tape.broadcast_add(p, v)?;
        let p = tape.scale(p, alpha);
        let s = tape.sin(p);
        Ok(tape.scale(s, 1.0 / self.config.depth as f64))
    }
}

impl Parametric for TitanModel {
    fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t, sparse) in [
                ("c", &l.c, true),
                ("w", &l.w, true),
                ("v", &l.v, false),
                ("gamma", &l.gamma, false),
                ("beta", &l.beta, false),
            ] {
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
        let mut out = Vec::with_capacity(5 * self.layers.len() + 1);
        for l in &self.layers {
            out.extend([&l.c, &l.w, &l.v, &l.gamma, &l.beta]);
        }
        out.push(&self.head);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(5 * self.layers.len() + 1);
        for l in &mut self.layers {
            out.extend([&mut l.c, &mut l.w, &mut l.v, &mut l.gamma, &mut l.beta]);
        }
        out.push(&mut self.head);
        out
    }

    fn frozen(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("b0", &self.b0)]
    }

    fn frozen_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("b0", &mut self.b0)]
    }
}

impl CoordinateModel for TitanModel {
    fn out_channels(&self) -> usize {
        self.config.out_channels
    }

    fn record(&self, tape: &mut Tape, coords: Var, norm: NormMode<'_>) -> Result<Recorded> {
        if tape.shape(coords).first() == Some(&0) {
            return Err(Error::EmptyBatch("titan_forward"));
        }
        let params = register(tape, &self.params());
        let mut h = tape.constant(self.b0.clone());
        let mut norm_stats = Vec::with_capacity(self.layers.len());
        for i in 0..self.layers.len() {
            let layer = [0, 1, 2, 3, 4].map(|j| params[5 * i + j]);
            let (out, stats) = self.record_layer(tape, i, coords, h, layer, norm.layer(i)?)?;
            norm_stats.push(stats);
            h = out;
        }
        let head = params[params.len() - 1];
        let output = self.record_head(tape, h, head)?;
        Ok(Recorded { output, params, norm_stats })
    }

    /// Layer-by-layer forward pass that keeps only the current activations,
    /// so large grids fit in memory. Bit-identical to [`record`](Self::record).
    fn evaluate(&self, coords: &Tensor, norm: NormMode<'_>) -> Result<(Tensor, Vec<NormStats>)> {
        if coords.shape().first() == Some(&0) {
            return Err(Error::EmptyBatch("titan_forward"));
        }
        let mut h = self.b0.clone();
        let mut norm_stats = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let mut tape = Tape::new();
            let x = tape.constant(coords.clone());
            let hv = tape.constant(h);
            let layer = [&l.c, &l.w, &l.v, &l.gamma, &l.beta].map(|t| tape.constant(t.clone()));
            let (out, stats) = self.record_layer(&mut tape, i, x, hv, layer, norm.layer(i)?)?;
            norm_stats.push(stats);
            h = tape.into_value(out);
        }
        let mut tape = Tape::new();
        let hv = tape.constant(h);
        let head = tape.constant(self.head.clone());
        let out = self.record_head(&mut tape, hv, head)?;
        Ok((tape.into_value(out), norm_stats))
    }
}

impl TitanModel {
    /// `cn(act(C_i h + R̂_i(x)))` with `layer = [C_i, W_i, v_i, γ_i, β_i]`.
    fn record_layer(
        &self,
        tape: &mut Tape,
        i: usize,
        coords: Var,
        h: Var,
        layer: [Var; 5],
        frozen: Option<&NormStats>,
    ) -> Result<(Var, NormStats)> {
        let [c, w, v, gamma, beta] = layer;
        let r = self.record_residual(tape, i, coords, w, v)?;
        let z = tape.matmul_t(h, c)?;
        // B_0 is a single row shared by every coordinate
        let s = if i == 0 { tape.broadcast_add(r, z)? } else { tape.add(z, r)? };
        let a = self.config.activation.apply(tape, s);
        tape.channel_norm(a, gamma, beta, self.config.norm_eps, frozen)
    }

    fn record_head(&self, tape: &mut Tape, h: Var, head: Var) -> Result<Var> {
        let logits = tape.matmul_t(h, head)?;
        Ok(tape.sigmoid(logits))
    }
}
