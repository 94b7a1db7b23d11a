//! SIREN coordinate network with sine activations.

use alloc::format;
use alloc::vec::Vec;

use super::{register, uniform_tensor, CoordinateModel, NormMode, ParamSpec, Parametric, Recorded};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Philox;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SirenConfig {
    /// Number of sine layers (`d`).
    pub hidden_layers: usize,
    pub width: usize,
    pub out_channels: usize,
    /// Frequency applied inside every sine.
    pub omega0: f64,
    pub seed: u64,
}

impl SirenConfig {
    pub fn new(hidden_layers: usize, width: usize, out_channels: usize, seed: u64) -> Self {
        Self { hidden_layers, width, out_channels, omega0: 30.0, seed }
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let (w, d) = (self.width, self.hidden_layers);
        (2 * w + w) + (d - 1) * (w * w + w) + (w * self.out_channels + self.out_channels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SirenModel {
    pub config: SirenConfig,
    /// `(weight out x in, bias out)` for each sine layer.
    pub layers: Vec<(Tensor, Tensor)>,
    pub head: (Tensor, Tensor),
}

impl SirenModel {
    /// First layer weights `~ U(−1/2, 1/2)` (`1/fan_in` with two inputs),
    /// later weights `~ U(±√(6/fan_in)/ω0)`, biases `~ U(±1/√fan_in)`.
    pub fn new(config: SirenConfig) -> Result<Self> {
        let SirenConfig { hidden_layers: d, width, out_channels, omega0, .. } = config;
        if d == 0 || width == 0 || out_channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "SIREN needs positive layers, width and outputs, got d={d} width={width} out={out_channels}"
            )));
        }
        let mut rng = Philox::new(config.seed, 0);
        let mut layers = Vec::with_capacity(d);
        for i in 0..d {
            let fan_in = if i == 0 { 2 } else { width };
            let wb = if i == 0 { 1.0 / fan_in as f64 } else { libm::sqrt(6.0 / fan_in as f64) / omega0 };
            let w = uniform_tensor(&[width, fan_in], wb, &mut rng);
            let b = uniform_tensor(&[width], 1.0 / libm::sqrt(fan_in as f64), &mut rng);
            layers.push((w, b));
        }
        let hw = uniform_tensor(&[out_channels, width], libm::sqrt(6.0 / width as f64) / omega0, &mut rng);
        let hb = uniform_tensor(&[out_channels], 1.0 / libm::sqrt(width as f64), &mut rng);
        Ok(Self { config, layers, head: (hw, hb) })
    }
}

impl Parametric for SirenModel {
    fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        let mut push = |name: alloc::string::String, t: &Tensor, sparse| {
            specs.push(ParamSpec { name, shape: t.shape().to_vec(), sparsifiable: sparse })
        };
        for (i, (w, b)) in self.layers.iter().enumerate() {
            push(format!("layers.{i}.weight"), w, true);
            push(format!("layers.{i}.bias"), b, false);
        }
        push("head.weight".into(), &self.head.0, true);
        push("head.bias".into(), &self.head.1, false);
        specs
    }

    fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.layers.iter().flat_map(|(w, b)| [w, b]).collect();
        out.extend([&self.head.0, &self.head.1]);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.layers.iter_mut().flat_map(|(w, b)| [w, b]).collect();
        out.extend([&mut self.head.0, &mut self.head.1]);
        out
    }
}

impl CoordinateModel for SirenModel {
    fn out_channels(&self) -> usize {
        self.config.out_channels
    }

    /// Sine layers `sin(ω0 (W h + b))`, then a linear head. Output is not
    /// clamped here.
    fn record(&self, tape: &mut Tape, coords: Var, _norm: NormMode<'_>) -> Result<Recorded> {
        if tape.shape(coords).first() == Some(&0) {
            return Err(Error::EmptyBatch("siren_forward"));
        }
        let params = register(tape, &self.params());
        let mut h = coords;
        for i in 0..self.layers.len() {
            let z = tape.matmul_t(h, params[2 * i])?;
            let z = tape.broadcast_add(z, params[2 * i + 1])?;
            let z = tape.scale(z, self.config.omega0);
            h = tape.sin(z);
        }
        let n = params.len();
        let z = tape.matmul_t(h, params[n - 2])?;
        let output = tape.broadcast_add(z, params[n - 1])?;
        Ok(Recorded { output, params, norm_stats: Vec::new() })
    }
}
