//! Experiment configuration: one flat TOML table, documented in
//! `docs/formats.md`. Every key has a default, so a config file only lists
//! what differs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use titan_core::models::Activation;

use crate::error::{HarnessError, Result};

/// Overrides the configured `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "TITAN_OUTPUT_DIR";

/// Image source naming the built-in Shepp–Logan phantom.
pub const PHANTOM: &str = "phantom";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Superres,
    Ct,
    LipschitzSweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Titan,
    Siren,
    DeepDecoder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Adabreg,
    Linbreg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Softplus,
}

impl From<ActivationKind> for Activation {
    fn from(a: ActivationKind) -> Self {
        match a {
            ActivationKind::Relu => Activation::Relu,
            ActivationKind::Softplus => Activation::Softplus,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub model: ModelKind,
    /// Ground-truth image (PGM P5 or PNG), or `"phantom"`.
    pub image: String,
    /// Side length the ground truth is box-downsampled to before use.
    pub image_size: usize,
    /// Super-resolution factor.
    pub factor: usize,
    /// Number of CT projection angles.
    pub angles: usize,
    pub noise_sigma: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub lr_min: f64,
    pub schedule: Schedule,
    /// Bregman threshold λ.
    pub lambda: f64,
    /// Initial nonzero fraction for Bregman training.
    pub r0: f64,
    pub seed: u64,
    pub output_dir: PathBuf,

    // TITAN
    pub depth: usize,
    pub width: usize,
    pub alpha_step: f64,
    pub activation: ActivationKind,
    /// Evaluate with training-time normalization statistics instead of
    /// recomputing them over the evaluation grid.
    pub freeze_norm_stats: bool,

    // SIREN
    pub siren_layers: usize,
    pub siren_width: usize,
    pub omega0: f64,

    // deep decoder
    pub dd_n0: usize,
    pub dd_width: usize,

    /// Attach a Lipschitz estimate over the evaluation grid to the report.
    pub lipschitz: bool,
    /// Initial nonzero fractions visited by `lipschitz_sweep`.
    pub r0_values: Vec<f64>,
    /// Seeds per sweep cell: `seed, seed + 1, …`.
    pub sweep_seeds: usize,
    /// Write a checkpoint next to the report.
    pub checkpoint: bool,
    /// Print the loss every this many epochs (0 = silent).
    pub log_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Superres,
            model: ModelKind::Titan,
            image: String::new(),
            image_size: 128,
            factor: 4,
            angles: 30,
            noise_sigma: 2.0,
            epochs: 5000,
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            lr_min: 0.0,
            schedule: Schedule::Constant,
            lambda: 1e-3,
            r0: 0.1,
            seed: 0,
            output_dir: PathBuf::from("out"),
            depth: 10,
            width: 100,
            alpha_step: 4.0,
            activation: ActivationKind::Relu,
            freeze_norm_stats: false,
            siren_layers: 2,
            siren_width: 256,
            omega0: 30.0,
            dd_n0: 4,
            dd_width: 64,
            lipschitz: false,
            r0_values: vec![0.01, 0.1, 1.0],
            sweep_seeds: 5,
            checkpoint: true,
            log_every: 0,
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

impl ExperimentConfig {
    /// Parses a config from TOML text, applies `key=value` overrides (values
    /// in TOML syntax; bare words are taken as strings), and validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(config_error)?;
        for ov in overrides {
            let (key, raw) =
                ov.split_once('=').ok_or_else(|| HarnessError::Config(format!("override `{ov}` is not key=value")))?;
            let key = key.trim();
            let raw = raw.trim();
            let value = parse_value(raw);
            table.insert(key.to_string(), value);
        }
        let cfg: Self = table.try_into().map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file. Relative image paths resolve against the file's
    /// directory; [`OUTPUT_DIR_ENV`] overrides the output directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.image != PHANTOM && Path::new(&cfg.image).is_relative() {
            cfg.image = base.join(&cfg.image).to_string_lossy().into_owned();
        }
        cfg.apply_env();
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if self.image.is_empty() {
            return fail("`image` must name an image file or \"phantom\"".into());
        }
        if self.image_size == 0 {
            return fail("`image_size` must be positive".into());
        }
        if self.epochs == 0 {
            return fail("`epochs` must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.lr_min >= 0.0) || self.lr_min > self.lr {
            return fail(format!("need 0 <= lr_min <= lr and lr > 0, got lr={} lr_min={}", self.lr, self.lr_min));
        }
        if self.optimizer != OptimizerKind::Adam {
            if !(self.lambda > 0.0) {
                return fail(format!("`lambda` must be positive, got {}", self.lambda));
            }
            if !(self.r0 > 0.0 && self.r0 <= 1.0) {
                return fail(format!("`r0` must lie in (0, 1], got {}", self.r0));
            }
        }
        match self.task {
            Task::Superres | Task::LipschitzSweep => {
                if self.factor == 0 || !self.image_size.is_multiple_of(self.factor) {
                    return fail(format!("factor {} must divide image_size {}", self.factor, self.image_size));
                }
            }
            Task::Ct => {
                if self.angles == 0 {
                    return fail("`angles` must be positive".into());
                }
                if !(self.noise_sigma >= 0.0) {
                    return fail(format!("`noise_sigma` must be >= 0, got {}", self.noise_sigma));
                }
            }
        }
        if self.task == Task::LipschitzSweep {
            if self.model != ModelKind::Titan {
                return fail("lipschitz_sweep trains TITAN only".into());
            }
            if self.r0_values.is_empty() || self.sweep_seeds == 0 {
                return fail("lipschitz_sweep needs r0_values and sweep_seeds >= 1".into());
            }
            if let Some(r) = self.r0_values.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
                return fail(format!("r0 value {r} not in (0, 1]"));
            }
        }
        match self.model {
            ModelKind::Titan if self.depth == 0 || self.width == 0 => {
                fail("TITAN needs positive depth and width".into())
            }
            ModelKind::Siren if self.siren_layers == 0 || self.siren_width == 0 => {
                fail("SIREN needs positive siren_layers and siren_width".into())
            }
            ModelKind::DeepDecoder => {
                let side = self.dd_output_side();
                // output raster must double up to the image size exactly
                if self.dd_n0 == 0 || self.dd_width == 0 || side.is_none() {
                    return fail(format!(
                        "deep decoder: image_size {} must be dd_n0 {} times a power of two",
                        self.image_size, self.dd_n0
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Depth of the deep decoder given `dd_n0` and `image_size`.
    pub fn dd_depth(&self) -> Option<usize> {
        if self.dd_n0 == 0 || !self.image_size.is_multiple_of(self.dd_n0) {
            return None;
        }
        let ratio = self.image_size / self.dd_n0;
        ratio.is_power_of_two().then(|| ratio.trailing_zeros() as usize)
    }

    fn dd_output_side(&self) -> Option<usize> {
        self.dd_depth().map(|d| self.dd_n0 << d)
    }

    pub fn check_files(&self) -> Result<()> {
        if self.image != PHANTOM && !Path::new(&self.image).is_file() {
            return Err(HarnessError::Config(format!("image `{}` does not exist", self.image)));
        }
        Ok(())
    }
}

/// Parses an override value as TOML, falling back to a plain string so
/// `model=siren` works without quotes.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
