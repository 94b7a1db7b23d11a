//! The three experiments: super-resolution, CT reconstruction and the
//! Lipschitz-versus-sparsity sweep.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use titan_core::autodiff::NormStats;
use titan_core::metrics::{lipschitz_estimate, quality, LipschitzReport};
use titan_core::models::NormMode;
use titan_core::operators::{add_noise, box_downsample, coord_grid, shepp_logan, NoiseSpec, RadonOperator};
use titan_core::Tensor;

use crate::checkpoint::{self, CheckpointHeader};
use crate::config::{ExperimentConfig, ModelKind, OptimizerKind, Task, PHANTOM};
use crate::error::{HarnessError, Result};
use crate::image_io::{load_image, save_image};
use crate::model::AnyModel;
use crate::train::{train, Objective, OptimizerState, StepObserver};

/// Philox stream of the CT measurement noise (streams 0–2 seed the model
/// weights, its fixed input and the sparse initialization).
const NOISE_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSummary {
    pub constant: f64,
    pub argmax: [f64; 2],
    pub argmax_pixel: [usize; 2],
}

impl From<&LipschitzReport> for LipschitzSummary {
    fn from(r: &LipschitzReport) -> Self {
        Self {
            constant: r.constant,
            argmax: [r.argmax.0, r.argmax.1],
            argmax_pixel: [r.argmax_pixel.0, r.argmax_pixel.1],
        }
    }
}

/// Everything a run reports. Contains no timing so it is reproducible bit
/// for bit; wall-clock goes to `timing.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    /// Loss before each epoch's update.
    pub loss_curve: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `None` when reconstruction and ground truth are identical.
    pub psnr_db: Option<f64>,
    pub psnr_identical: bool,
    pub ssim: f64,
    pub dense_params: usize,
    pub nonzero_params: usize,
    pub frozen_params: usize,
    pub nonzero_fraction: f64,
    /// Bregman runs: entries of sparsifiable tensors with `|u| > λ`.
    pub active_duals: Option<usize>,
    pub lipschitz: Option<LipschitzSummary>,
}

/// In-memory results of one run.
pub struct RunOutput {
    pub report: RunReport,
    pub model: AnyModel,
    pub optimizer: OptimizerState,
    pub reconstruction: Tensor,
    pub ground_truth: Tensor,
    pub lipschitz: Option<LipschitzReport>,
    /// Normalization statistics of the last training pass.
    pub norm_stats: Vec<NormStats>,
    pub wall_clock_s: f64,
}

/// Ground truth at `image_size`: the built-in phantom, or the image file
/// box-downsampled by an integer factor.
pub fn load_ground_truth(cfg: &ExperimentConfig) -> Result<Tensor> {
    if cfg.image == PHANTOM {
        return Ok(shepp_logan(cfg.image_size)?);
    }
    let img = load_image(Path::new(&cfg.image))?;
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let s = cfg.image_size;
    if h % s != 0 || w % s != 0 || h / s != w / s {
        return Err(HarnessError::Config(format!(
            "image {h}x{w} cannot be box-downsampled to {s}x{s} by an integer factor"
        )));
    }
    if h == s {
        return Ok(img);
    }
    Ok(box_downsample(&img, h / s)?)
}

fn channels(img: &Tensor) -> usize {
    if img.ndim() == 3 {
        img.shape()[2]
    } else {
        1
    }
}

/// Runs one experiment (superres or CT) without writing files.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_observed(cfg, &mut ())
}

pub fn run_observed(cfg: &ExperimentConfig, observer: &mut dyn StepObserver) -> Result<RunOutput> {
    cfg.validate()?;
    let gt = load_ground_truth(cfg)?;
    run_with_ground_truth(cfg, gt, observer)
}

/// Runs `cfg` against an in-memory ground truth (`image_size` square, `H x W`
/// or `H x W x C`) instead of the configured image.
pub fn run_with_ground_truth(cfg: &ExperimentConfig, gt: Tensor, observer: &mut dyn StepObserver) -> Result<RunOutput> {
    cfg.validate()?;
    crate::alloc_tuning::configure();
    let start = Instant::now();
    let side = cfg.image_size;
    if gt.ndim() < 2 || gt.shape()[0] != side || gt.shape()[1] != side {
        return Err(HarnessError::Config(format!("ground truth has shape {:?}, expected {side}x{side}", gt.shape())));
    }
    let c = channels(&gt);
    let objective = match cfg.task {
        Task::Superres | Task::LipschitzSweep => superres_objective(cfg, &gt, c)?,
        Task::Ct => ct_objective(cfg, &gt)?,
    };
    let mut model = AnyModel::build(cfg, c)?;
    let outcome = train(&mut model, &objective, cfg, observer)?;
    let (report, reconstruction, lip) =
        evaluate(cfg, &model, &outcome.optimizer, &gt, &outcome.norm_stats, outcome.loss_curve)?;
    Ok(RunOutput {
        report,
        model,
        optimizer: outcome.optimizer,
        reconstruction,
        ground_truth: gt,
        lipschitz: lip,
        norm_stats: outcome.norm_stats,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

fn superres_objective(cfg: &ExperimentConfig, gt: &Tensor, c: usize) -> Result<Objective> {
    let f = cfg.factor;
    let low = box_downsample(gt, f)?;
    let (lh, lw) = (low.shape()[0], low.shape()[1]);
    let target = low.into_reshaped(&[lh * lw, c])?;
    Ok(match cfg.model {
        ModelKind::DeepDecoder => Objective::FitDownsampled { target, side: cfg.image_size, factor: f },
        _ => Objective::Fit { coords: coord_grid(lh, lw)?, target },
    })
}

/// Noiseless sinogram of the ground truth plus seeded Gaussian noise.
pub fn ct_measurements(cfg: &ExperimentConfig, gt: &Tensor) -> Result<(Arc<RadonOperator>, Tensor)> {
    let n = cfg.image_size;
    let op = Arc::new(RadonOperator::new(n, n, cfg.angles)?);
    let clean = op.forward(gt)?;
    let sino = add_noise(&clean, NoiseSpec { sigma: cfg.noise_sigma, seed: cfg.seed, stream: NOISE_STREAM })?;
    Ok((op, sino))
}

fn ct_objective(cfg: &ExperimentConfig, gt: &Tensor) -> Result<Objective> {
    if gt.ndim() != 2 {
        return Err(HarnessError::Config("CT needs a grayscale ground truth".into()));
    }
    let n = cfg.image_size;
    let (op, sino) = ct_measurements(cfg, gt)?;
    let coords = match cfg.model {
        ModelKind::DeepDecoder => None,
        _ => Some(coord_grid(n, n)?),
    };
    Ok(Objective::Ct { coords, op, sino, size: n })
}

/// Renders the trained model at full resolution and assembles the report.
fn evaluate(
    cfg: &ExperimentConfig,
    model: &AnyModel,
    optimizer: &OptimizerState,
    gt: &Tensor,
    train_stats: &[NormStats],
    loss_curve: Vec<f64>,
) -> Result<(RunReport, Tensor, Option<LipschitzReport>)> {
    let n = cfg.image_size;
    let norm = if cfg.freeze_norm_stats { NormMode::Frozen(train_stats) } else { NormMode::Batch };
    let (recon, _) = model.render(n, n, norm)?;
    let q = quality(&recon, gt)?;
    let lip = match (cfg.lipschitz, model.coordinate()) {
        (true, Some(cm)) => Some(lipschitz_estimate(cm, n, n)?),
        _ => None,
    };
    let p = model.parametric();
    let dense = p.trainable_count();
    let nonzero = p.nonzero_count();
    let report = RunReport {
        config: cfg.clone(),
        initial_loss: loss_curve.first().copied().unwrap_or(f64::NAN),
        final_loss: loss_curve.last().copied().unwrap_or(f64::NAN),
        loss_curve,
        psnr_db: match q.psnr {
            titan_core::metrics::Psnr::Db(v) => Some(v),
            titan_core::metrics::Psnr::Identical => None,
        },
        psnr_identical: q.psnr.is_identical(),
        ssim: q.ssim,
        dense_params: dense,
        nonzero_params: nonzero,
        frozen_params: p.frozen_count(),
        nonzero_fraction: nonzero as f64 / dense as f64,
        active_duals: optimizer.bregman().map(|b| b.active_count()),
        lipschitz: lip.as_ref().map(LipschitzSummary::from),
    };
    Ok((report, recon, lip))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn image_name(stem: &str, img: &Tensor) -> String {
    if img.ndim() == 2 {
        format!("{stem}.pgm")
    } else {
        format!("{stem}.png")
    }
}

pub fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::format(path, e.to_string()))?;
    let err = |e: csv::Error| HarnessError::format(path, e.to_string());
    w.write_record(["epoch", "loss"]).map_err(err)?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Per-pixel singular values as `row,col,x,y,sigma_max`.
pub fn write_lipschitz_csv(path: &Path, rep: &LipschitzReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::format(path, e.to_string()))?;
    let err = |e: csv::Error| HarnessError::format(path, e.to_string());
    let (h, wd) = (rep.field.shape()[0], rep.field.shape()[1]);
    let grid = coord_grid(h, wd)?;
    w.write_record(["row", "col", "x", "y", "sigma_max"]).map_err(err)?;
    for i in 0..h {
        for j in 0..wd {
            let p = i * wd + j;
            w.write_record([
                i.to_string(),
                j.to_string(),
                grid.data()[2 * p].to_string(),
                grid.data()[2 * p + 1].to_string(),
                rep.field.data()[p].to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Writes report, loss curve, images, checkpoint and timing into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let cfg = &out.report.config;
    write_json(&dir.join("report.json"), &out.report)?;
    write_loss_csv(&dir.join("loss.csv"), &out.report.loss_curve)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(|e| HarnessError::io(dir, e))?;
    save_image(&out.reconstruction, &dir.join(image_name("reconstruction", &out.reconstruction)))?;
    save_image(&out.ground_truth, &dir.join(image_name("ground_truth", &out.ground_truth)))?;
    if let Some(l) = &out.lipschitz {
        write_lipschitz_csv(&dir.join("lipschitz_field.csv"), l)?;
    }
    if cfg.checkpoint {
        let header = CheckpointHeader {
            format_version: 1,
            config: cfg.clone(),
            out_channels: channels(&out.ground_truth),
            loss_curve: out.report.loss_curve.clone(),
            adam_steps: out.optimizer.adam().t,
            norm_stats: out.norm_stats.iter().map(Into::into).collect(),
        };
        checkpoint::save(&dir.join("checkpoint.titan"), &header, &out.model, &out.optimizer)?;
    }
    let timing = serde_json::json!({
        "wall_clock_s": out.wall_clock_s,
        "epochs": cfg.epochs,
        "seconds_per_epoch": out.wall_clock_s / cfg.epochs as f64,
    });
    write_json(&dir.join("timing.json"), &timing)
}

/// Runs a superres or CT config and writes its outputs to `output_dir`.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<RunReport> {
    let out = run(cfg)?;
    write_outputs(&out, &cfg.output_dir)?;
    Ok(out.report)
}

pub fn run_superres(cfg: &ExperimentConfig) -> Result<RunOutput> {
    if cfg.task != Task::Superres {
        return Err(HarnessError::Config("run_superres needs task = \"superres\"".into()));
    }
    run(cfg)
}

pub fn run_ct(cfg: &ExperimentConfig) -> Result<RunOutput> {
    if cfg.task != Task::Ct {
        return Err(HarnessError::Config("run_ct needs task = \"ct\"".into()));
    }
    run(cfg)
}

/// Rebuilds the report of a finished run from its checkpoint; identical to
/// the original `report.json`.
pub fn report_from_checkpoint(path: &Path) -> Result<(RunReport, Tensor)> {
    let ck = checkpoint::load(path)?;
    let cfg = &ck.header.config;
    let gt = load_ground_truth(cfg)?;
    let stats: Vec<NormStats> = ck.header.norm_stats.iter().map(Into::into).collect();
    let (report, recon, _) = evaluate(cfg, &ck.model, &ck.optimizer, &gt, &stats, ck.header.loss_curve.clone())?;
    Ok((report, recon))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r0: f64,
    pub mean_lipschitz: f64,
    pub std_error: f64,
    pub mean_nonzero_fraction: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    /// Per-cell results, `cells[i][s]` for `r0_values[i]` and seed offset `s`.
    pub cells: Vec<Vec<SweepCell>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub seed: u64,
    pub lipschitz: f64,
    pub nonzero_fraction: f64,
    pub psnr_db: Option<f64>,
    pub ssim: f64,
    pub final_loss: f64,
}

/// The configuration of one sweep cell.
pub fn sweep_cell_config(cfg: &ExperimentConfig, r0: f64, seed_offset: usize) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.task = Task::Superres;
    c.model = ModelKind::Titan;
    c.optimizer = OptimizerKind::Adabreg;
    c.r0 = r0;
    c.seed = cfg.seed + seed_offset as u64;
    c.lipschitz = true;
    c.output_dir = cfg.output_dir.join(format!("r0_{r0}")).join(format!("seed_{}", c.seed));
    c
}

/// Mean and standard error (`sd / √n`, zero for a single sample).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Trains TITAN with AdaBreg for every `(r0, seed)` cell, estimates the
/// Lipschitz constant on the full-resolution grid, and aggregates per r0.
/// [`run_lipschitz_sweep_with`] takes the per-cell runner, e.g. to reuse
/// cells shared with another experiment.
pub fn run_lipschitz_sweep(cfg: &ExperimentConfig, write: bool) -> Result<SweepReport> {
    run_lipschitz_sweep_with(cfg, write, &mut |c| run(c))
}

pub fn run_lipschitz_sweep_with(
    cfg: &ExperimentConfig,
    write: bool,
    runner: &mut dyn FnMut(&ExperimentConfig) -> Result<RunOutput>,
) -> Result<SweepReport> {
    if cfg.task != Task::LipschitzSweep {
        return Err(HarnessError::Config("run_lipschitz_sweep needs task = \"lipschitz_sweep\"".into()));
    }
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for &r0 in &cfg.r0_values {
        let mut row_cells = Vec::new();
        for s in 0..cfg.sweep_seeds {
            let cc = sweep_cell_config(cfg, r0, s);
            let out = runner(&cc)?;
            if write {
                write_outputs(&out, &cc.output_dir)?;
            }
            let lip = out.lipschitz.as_ref().map(|l| l.constant).unwrap_or(f64::NAN);
            if cfg.log_every > 0 {
                eprintln!("sweep r0={r0} seed={}: L={lip:.4} nonzero={:.4}", cc.seed, out.report.nonzero_fraction);
            }
            row_cells.push(SweepCell {
                seed: cc.seed,
                lipschitz: lip,
                nonzero_fraction: out.report.nonzero_fraction,
                psnr_db: out.report.psnr_db,
                ssim: out.report.ssim,
                final_loss: out.report.final_loss,
            });
        }
        let ls: Vec<f64> = row_cells.iter().map(|c| c.lipschitz).collect();
        let (mean, se) = mean_and_stderr(&ls);
        let nz = row_cells.iter().map(|c| c.nonzero_fraction).sum::<f64>() / row_cells.len() as f64;
        rows.push(SweepRow { r0, mean_lipschitz: mean, std_error: se, mean_nonzero_fraction: nz, seeds: ls.len() });
        cells.push(row_cells);
    }
    let report = SweepReport { config: cfg.clone(), rows, cells };
    if write {
        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| HarnessError::io(&cfg.output_dir, e))?;
        write_sweep_csv(&cfg.output_dir.join("lipschitz_sweep.csv"), &report.rows)?;
        write_json(&cfg.output_dir.join("sweep_report.json"), &report)?;
    }
    Ok(report)
}

pub fn sweep_csv_string(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r0", "mean_lipschitz", "std_error", "mean_nonzero_fraction", "seeds"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.r0.to_string(),
            r.mean_lipschitz.to_string(),
            r.std_error.to_string(),
            r.mean_nonzero_fraction.to_string(),
            r.seeds.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(sweep_csv_string(rows).as_bytes()).map_err(|e| HarnessError::io(path, e))
}

/// Output directory of a config after the environment override.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    let mut c = cfg.clone();
    c.apply_env();
    c.output_dir
}
