//! Construction of the configured model and a uniform view over the three
//! architectures.

use titan_core::autodiff::{NormStats, Tape, Var};
use titan_core::models::{
    CoordinateModel, DeepDecoderConfig, DeepDecoderModel, NormMode, ParamSpec, Parametric, Recorded, SirenConfig,
    SirenModel, TitanConfig, TitanModel,
};
use titan_core::Tensor;

use crate::config::{ExperimentConfig, ModelKind};
use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Titan(TitanModel),
    Siren(SirenModel),
    DeepDecoder(DeepDecoderModel),
}

impl AnyModel {
    /// Builds the configured architecture with `out_channels` outputs and the
    /// config seed.
    pub fn build(cfg: &ExperimentConfig, out_channels: usize) -> Result<Self> {
        Self::build_seeded(cfg, out_channels, cfg.seed)
    }

    pub fn build_seeded(cfg: &ExperimentConfig, out_channels: usize, seed: u64) -> Result<Self> {
        Ok(match cfg.model {
            ModelKind::Titan => {
                let mut tc = TitanConfig::new(cfg.depth, cfg.width, out_channels, seed);
                tc.alpha_step = cfg.alpha_step;
                tc.activation = cfg.activation.into();
                AnyModel::Titan(TitanModel::new(tc)?)
            }
            ModelKind::Siren => {
                let mut sc = SirenConfig::new(cfg.siren_layers, cfg.siren_width, out_channels, seed);
                sc.omega0 = cfg.omega0;
                AnyModel::Siren(SirenModel::new(sc)?)
            }
            ModelKind::DeepDecoder => {
                let depth = cfg
                    .dd_depth()
                    .ok_or_else(|| HarnessError::Config("deep decoder depth does not fit image_size".into()))?;
                let mut dc = DeepDecoderConfig::new(cfg.dd_n0, depth, cfg.dd_width, out_channels, seed);
                dc.activation = cfg.activation.into();
                AnyModel::DeepDecoder(DeepDecoderModel::new(dc)?)
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Titan(_) => ModelKind::Titan,
            AnyModel::Siren(_) => ModelKind::Siren,
            AnyModel::DeepDecoder(_) => ModelKind::DeepDecoder,
        }
    }

    pub fn parametric(&self) -> &dyn Parametric {
        match self {
            AnyModel::Titan(m) => m,
            AnyModel::Siren(m) => m,
            AnyModel::DeepDecoder(m) => m,
        }
    }

    pub fn parametric_mut(&mut self) -> &mut dyn Parametric {
        match self {
            AnyModel::Titan(m) => m,
            AnyModel::Siren(m) => m,
            AnyModel::DeepDecoder(m) => m,
        }
    }

    /// The coordinate-model view; `None` for the raster deep decoder.
    pub fn coordinate(&self) -> Option<&dyn CoordinateModel> {
        match self {
            AnyModel::Titan(m) => Some(m),
            AnyModel::Siren(m) => Some(m),
            AnyModel::DeepDecoder(_) => None,
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        self.parametric().param_specs()
    }

    /// Records the model output for the given grid: `N x k_d` rows for
    /// coordinate models, the full raster for the deep decoder.
    pub fn record(&self, tape: &mut Tape, coords: Option<Var>, norm: NormMode<'_>) -> Result<Recorded> {
        match (self, coords) {
            (AnyModel::DeepDecoder(m), _) => Ok(m.record(tape, norm)?),
            (m, Some(c)) => Ok(m.coordinate().expect("coordinate model").record(tape, c, norm)?),
            (_, None) => Err(HarnessError::Config("coordinate model evaluated without coordinates".into())),
        }
    }

    /// Output as an image `H x W` (one channel) or `H x W x C`, evaluated on
    /// the `height x width` pixel-center grid. SIREN output is clamped to
    /// `[0, 1]` here.
    pub fn render(&self, height: usize, width: usize, norm: NormMode<'_>) -> Result<(Tensor, Vec<NormStats>)> {
        let (flat, stats, channels) = match self {
            AnyModel::DeepDecoder(m) => {
                let side = m.config.output_side();
                if side != height || side != width {
                    return Err(HarnessError::Config(format!(
                        "deep decoder renders {side}x{side}, asked for {height}x{width}"
                    )));
                }
                let mut tape = Tape::new();
                let rec = m.record(&mut tape, norm)?;
                (tape.value(rec.output).clone(), rec.norm_stats, m.config.out_channels)
            }
            m => {
                let cm = m.coordinate().expect("coordinate model");
                let grid = titan_core::operators::coord_grid(height, width)?;
                let (out, stats) = cm.evaluate(&grid, norm)?;
                (out, stats, cm.out_channels())
            }
        };
        let mut flat = flat;
        if let AnyModel::Siren(_) = self {
            flat = flat.map(|v| v.clamp(0.0, 1.0));
        }
        let shape: &[usize] = if channels == 1 { &[height, width] } else { &[height, width, channels] };
        Ok((flat.into_reshaped(shape)?, stats))
    }
}
