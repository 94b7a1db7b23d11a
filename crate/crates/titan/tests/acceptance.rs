//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p titan --test acceptance` runs everything (well over an
//! hour on one core); pass criterion numbers to run a subset, e.g.
//! `cargo test -p titan --test acceptance -- 1 2 5 7`.
//!
//! A failed criterion is reported but does not fail the process unless
//! `TITAN_ACCEPTANCE_STRICT` is set to something other than `0`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use titan::config::ExperimentConfig;
use titan::harness::{self, run_lipschitz_sweep_with, RunOutput};
use titan::model::AnyModel;
use titan::train::{OptimizerState, StepObserver};
use titan_core::autodiff::Tape;
use titan_core::gradcheck::{grad_check, grad_check_many, grad_check_params};
use titan_core::models::{
    CoordinateModel, DeepDecoderConfig, DeepDecoderModel, NormMode, SirenConfig, SirenModel, TitanConfig, TitanModel,
};
use titan_core::operators::{coord_grid, RadonOperator};
use titan_core::optim::soft_threshold;
use titan_core::rng::Philox;
use titan_core::Tensor;

// Pinned tolerances and budgets.
const GRAD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
const DOT_TOL: f64 = 1e-8;
const DENSE_TOL: f64 = 1e-10;
const SUPERRES_PSNR_MARGIN: f64 = 0.5;
const SUPERRES_SSIM_MARGIN: f64 = 0.02;
const CT_PSNR_GAIN: f64 = 2.0;
const REFERENCE_TITAN_PSNR: f64 = 21.7;
const REFERENCE_BAND: f64 = 2.5;
const SUPERRES_BUDGET_S: f64 = 15.0 * 60.0;
const CT_BUDGET_S: f64 = 30.0 * 60.0;
const SWEEP_BUDGET_S: f64 = 60.0 * 60.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch() -> &'static Path {
    static DIR: std::sync::OnceLock<tempfile::TempDir> = std::sync::OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("temp dir")).path()
}

fn load(name: &str, overrides: &[&str]) -> ExperimentConfig {
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let mut c = ExperimentConfig::load(&configs_dir().join(name), &ov).unwrap_or_else(|e| panic!("{name}: {e}"));
    c.output_dir = scratch().join(name);
    c
}

fn psnr(out: &RunOutput) -> f64 {
    out.report.psnr_db.unwrap_or(f64::INFINITY)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Runs shared between criteria, keyed by the config with its output
/// directory blanked.
#[derive(Default)]
struct RunCache {
    runs: HashMap<String, (RunOutput, f64)>,
}

fn cache_key(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    // sweep-only keys do not affect a single run
    c.r0_values.clear();
    c.sweep_seeds = 0;
    c.to_toml()
}

impl RunCache {
    fn keep(&mut self, cfg: &ExperimentConfig, out: RunOutput, seconds: f64) {
        self.runs.insert(cache_key(cfg), (out, seconds));
    }

    /// A cached run (with the seconds it took) or a fresh one.
    fn take_or_run(&mut self, cfg: &ExperimentConfig) -> titan::Result<(RunOutput, f64)> {
        if let Some(hit) = self.runs.remove(&cache_key(cfg)) {
            return Ok(hit);
        }
        let t = Instant::now();
        let out = harness::run(cfg)?;
        Ok((out, t.elapsed().as_secs_f64()))
    }
}

// ---------------------------------------------------------------- 1

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = Philox::new(seed, 13);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

fn criterion_1() -> Verdict {
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let a = random(&[4, 3], 1, -1.0, 1.0);
    let b = random(&[3, 5], 2, -1.0, 1.0);
    let bt = random(&[5, 3], 3, -1.0, 1.0);
    let row = random(&[1, 3], 4, -1.0, 1.0);
    // keep relu arguments away from the kink
    let away = a.map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let sq = |t: &mut Tape, v| Ok(t.sum_of_squares(v));
    let product = |t: &mut Tape, vs: &[_]| {
        let m = t.matmul(vs[0], vs[1])?;
        Ok(t.sum_of_squares(m))
    };
    worst.push(("matmul", grad_check_many(product, &[a.clone(), b.clone()], FD_STEP).unwrap()));
    let product_t = |t: &mut Tape, vs: &[_]| {
        let m = t.matmul_t(vs[0], vs[1])?;
        Ok(t.sum_of_squares(m))
    };
    worst.push(("matmul_t", grad_check_many(product_t, &[a.clone(), bt], FD_STEP).unwrap()));
    let add = |t: &mut Tape, vs: &[_]| {
        let s = t.add(vs[0], vs[1])?;
        let s = t.sin(s);
        Ok(t.sum_of_squares(s))
    };
    worst.push(("add", grad_check_many(add, &[a.clone(), away.clone()], FD_STEP).unwrap()));
    let sub = |t: &mut Tape, vs: &[_]| {
        let s = t.sub(vs[0], vs[1])?;
        let s = t.sin(s);
        Ok(t.sum_of_squares(s))
    };
    worst.push(("sub", grad_check_many(sub, &[a.clone(), away.clone()], FD_STEP).unwrap()));
    type Unary = fn(&mut Tape, titan_core::autodiff::Var) -> titan_core::autodiff::Var;
    let unary: [(&str, Unary); 5] = [
        ("scale", |t, v| t.scale(v, -2.5)),
        ("relu", |t, v| t.relu(v)),
        ("softplus", |t, v| t.softplus(v)),
        ("sin", |t, v| t.sin(v)),
        ("sigmoid", |t, v| t.sigmoid(v)),
    ];
    for (name, f) in unary {
        let g = |t: &mut Tape, v| {
            let y = f(t, v);
            sq(t, y)
        };
        worst.push((name, grad_check(g, &away, FD_STEP).unwrap()));
    }
    let mean = |t: &mut Tape, v| {
        let s = t.sin(v);
        Ok(t.mean(s))
    };
    worst.push(("mean", grad_check(mean, &a, FD_STEP).unwrap()));
    worst.push(("sum_of_squares", grad_check(sq, &a, FD_STEP).unwrap()));
    let bcast = |t: &mut Tape, vs: &[_]| {
        let s = t.broadcast_add(vs[0], vs[1])?;
        let s = t.sin(s);
        Ok(t.sum_of_squares(s))
    };
    worst.push(("broadcast_add", grad_check_many(bcast, &[a.clone(), row.clone()], FD_STEP).unwrap()));
    let reshape = |t: &mut Tape, v| {
        let r = t.reshape(v, &[2, 6])?;
        let w = t.constant(random(&[6, 2], 5, -1.0, 1.0));
        let m = t.matmul(r, w)?;
        Ok(t.sum_of_squares(m))
    };
    worst.push(("reshape", grad_check(reshape, &a, FD_STEP).unwrap()));
    let weights = random(&[4, 3], 6, -1.0, 1.0);
    let norm = |t: &mut Tape, vs: &[_]| {
        let (n, _) = t.channel_norm(vs[0], vs[1], vs[2], 1e-5, None)?;
        let w = t.constant(weights.clone());
        let s = t.sub(n, w)?;
        let s = t.sin(s);
        Ok(t.sum_of_squares(s))
    };
    let gamma = random(&[1, 3], 7, 0.5, 1.5);
    worst.push(("channel_norm", grad_check_many(norm, &[a.clone(), gamma, row.clone()], FD_STEP).unwrap()));
    let grid = random(&[4, 3], 8, -1.0, 1.0); // 2x2 pixels, 3 channels
    let up_w = random(&[16, 3], 9, -1.0, 1.0);
    let upsample = |t: &mut Tape, v| {
        let u = t.bilinear_upsample(v, 2, 2)?;
        let w = t.constant(up_w.clone());
        let s = t.sub(u, w)?;
        Ok(t.sum_of_squares(s))
    };
    worst.push(("bilinear_upsample", grad_check(upsample, &grid, FD_STEP).unwrap()));
    let fine = random(&[16, 3], 10, -1.0, 1.0);
    let downsample = |t: &mut Tape, v| {
        let d = t.downsample_box(v, 4, 4, 2)?;
        let s = t.sin(d);
        Ok(t.sum_of_squares(s))
    };
    worst.push(("downsample_box", grad_check(downsample, &fine, FD_STEP).unwrap()));
    let op = Arc::new(RadonOperator::new(8, 8, 5).unwrap());
    let img = random(&[8, 8], 11, 0.0, 1.0);
    let radon = |t: &mut Tape, v| {
        let p = op.record(t, v)?;
        let s = t.sin(p);
        Ok(t.sum_of_squares(s))
    };
    worst.push(("radon (linear_map)", grad_check(radon, &img, FD_STEP).unwrap()));

    // full losses on tiny models: d = 2, k = 3, 8x8 images
    let coords = coord_grid(8, 8).unwrap();
    let target = random(&[64, 1], 12, 0.0, 1.0);
    let sino = op.forward(&target.clone().into_reshaped(&[8, 8]).unwrap()).unwrap();
    let fit = |m: &dyn CoordinateModel, t: &mut Tape| {
        let c = t.constant(coords.clone());
        let rec = m.record(t, c, NormMode::Batch)?;
        let y = t.constant(target.clone());
        let d = t.sub(rec.output, y)?;
        Ok((t.sum_of_squares(d), rec.params))
    };
    let ct = |m: &dyn CoordinateModel, t: &mut Tape| {
        let c = t.constant(coords.clone());
        let rec = m.record(t, c, NormMode::Batch)?;
        let img = t.reshape(rec.output, &[8, 8])?;
        let p = op.record(t, img)?;
        let b = t.constant(sino.clone());
        let d = t.sub(p, b)?;
        Ok((t.sum_of_squares(d), rec.params))
    };
    let titan = TitanModel::new(TitanConfig::new(2, 3, 1, 21)).unwrap();
    worst.push(("TITAN fit loss", grad_check_params(&titan, |m, t| fit(m, t), FD_STEP).unwrap()));
    worst.push(("TITAN CT loss", grad_check_params(&titan, |m, t| ct(m, t), FD_STEP).unwrap()));
    let mut sc = SirenConfig::new(2, 3, 1, 22);
    sc.omega0 = 3.0;
    let siren = SirenModel::new(sc).unwrap();
    worst.push(("SIREN fit loss", grad_check_params(&siren, |m, t| fit(m, t), FD_STEP).unwrap()));
    worst.push(("SIREN CT loss", grad_check_params(&siren, |m, t| ct(m, t), FD_STEP).unwrap()));
    let dd = DeepDecoderModel::new(DeepDecoderConfig::new(2, 2, 3, 1, 23)).unwrap();
    let dd_fit = |m: &DeepDecoderModel, t: &mut Tape| {
        let rec = m.record(t, NormMode::Batch)?;
        let y = t.constant(target.clone());
        let d = t.sub(rec.output, y)?;
        Ok((t.sum_of_squares(d), rec.params))
    };
    let dd_ct = |m: &DeepDecoderModel, t: &mut Tape| {
        let rec = m.record(t, NormMode::Batch)?;
        let img = t.reshape(rec.output, &[8, 8])?;
        let p = op.record(t, img)?;
        let b = t.constant(sino.clone());
        let d = t.sub(p, b)?;
        Ok((t.sum_of_squares(d), rec.params))
    };
    worst.push(("deep decoder fit loss", grad_check_params(&dd, dd_fit, FD_STEP).unwrap()));
    worst.push(("deep decoder CT loss", grad_check_params(&dd, dd_ct, FD_STEP).unwrap()));

    let (name, err) = worst.iter().copied().fold(("", 0.0), |acc, w| if w.1 > acc.1 { w } else { acc });
    let pass = worst.iter().all(|w| w.1 < GRAD_TOL);
    let failing: Vec<&str> = worst.iter().filter(|w| w.1 >= GRAD_TOL).map(|w| w.0).collect();
    verdict(
        pass,
        format!(
            "{} checks, worst relative error {err:.2e} ({name}) < {GRAD_TOL:e}{}",
            worst.len(),
            if failing.is_empty() { String::new() } else { format!("; failing: {failing:?}") }
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Dense projection matrix straight from the rotate-and-sum definition with
/// bilinear interpolation, angles `jπ/m`, rotation about the image center.
fn dense_radon(n: usize, m: usize) -> Vec<Vec<f64>> {
    let mut mat = vec![vec![0.0; n * n]; m * n];
    let ctr = (n as f64 - 1.0) / 2.0;
    for j in 0..m {
        let th = j as f64 * PI / m as f64;
        for bin in 0..n {
            for r in 0..n {
                let (x, y) = (bin as f64 - ctr, r as f64 - ctr);
                let xs = ctr + x * th.cos() - y * th.sin();
                let ys = ctr + x * th.sin() + y * th.cos();
                let (ix, iy) = (xs.floor(), ys.floor());
                for (px, py) in [(ix, iy), (ix + 1.0, iy), (ix, iy + 1.0), (ix + 1.0, iy + 1.0)] {
                    if px < 0.0 || py < 0.0 || px >= n as f64 || py >= n as f64 {
                        continue;
                    }
                    let w = (1.0 - (xs - px).abs()) * (1.0 - (ys - py).abs());
                    mat[j * n + bin][py as usize * n + px as usize] += w;
                }
            }
        }
    }
    mat
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn criterion_2() -> Verdict {
    let op = RadonOperator::new(64, 64, 30).unwrap();
    let mut worst_dot: f64 = 0.0;
    for s in 0..20 {
        let x = random(&[64, 64], 100 + s, -1.0, 1.0);
        let y = random(&[30, 64], 200 + s, -1.0, 1.0);
        let lhs = dot(&op.forward(&x).unwrap(), &y);
        let rhs = dot(&x, &op.adjoint(&y).unwrap());
        worst_dot = worst_dot.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    let (n, m) = (16, 8);
    let small = RadonOperator::new(n, n, m).unwrap();
    let mat = dense_radon(n, m);
    let mut worst_dense: f64 = 0.0;
    for s in 0..5 {
        let x = random(&[n, n], 300 + s, -1.0, 1.0);
        let y = random(&[m, n], 400 + s, -1.0, 1.0);
        let fwd = small.forward(&x).unwrap();
        let adj = small.adjoint(&y).unwrap();
        for (r, row) in mat.iter().enumerate() {
            let e: f64 = row.iter().zip(x.data()).map(|(a, b)| a * b).sum();
            worst_dense = worst_dense.max((fwd.data()[r] - e).abs());
        }
        for (p, got) in adj.data().iter().enumerate() {
            let e: f64 = mat.iter().zip(y.data()).map(|(row, yr)| row[p] * yr).sum();
            worst_dense = worst_dense.max((got - e).abs());
        }
    }
    verdict(
        worst_dot < DOT_TOL && worst_dense < DENSE_TOL,
        format!(
            "dot test worst relative error {worst_dot:.2e} < {DOT_TOL:e} (20 pairs, 64x64, m=30); \
             dense oracle worst |diff| {worst_dense:.2e} < {DENSE_TOL:e} (16x16, m=8, forward and adjoint)"
        ),
    )
}

// ---------------------------------------------------------------- 3

const SHARED_SEEDS: [&str; 3] = ["seed=0", "seed=1", "seed=2"];

fn criterion_3(cache: &mut RunCache) -> Verdict {
    let start = Instant::now();
    let (mut tp, mut ts, mut sp, mut ss) = (vec![], vec![], vec![], vec![]);
    for seed in SHARED_SEEDS {
        // Lipschitz estimation on, so the runs double as sweep cells.
        let tc = load("superres_titan.toml", &[seed, "lipschitz=true"]);
        let t0 = Instant::now();
        let t = harness::run(&tc).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let sc = load("superres_siren.toml", &[seed]);
        let s = harness::run(&sc).unwrap();
        println!(
            "    {seed}: TITAN {:.3} dB / {:.4} (nonzero {:.3})   SIREN {:.3} dB / {:.4}",
            psnr(&t),
            t.report.ssim,
            t.report.nonzero_fraction,
            psnr(&s),
            s.report.ssim
        );
        tp.push(psnr(&t));
        ts.push(t.report.ssim);
        sp.push(psnr(&s));
        ss.push(s.report.ssim);
        cache.keep(&tc, t, secs);
    }
    let secs = start.elapsed().as_secs_f64();
    let (dp, ds) = (mean(&tp) - mean(&sp), mean(&ts) - mean(&ss));
    verdict(
        dp >= SUPERRES_PSNR_MARGIN && ds >= SUPERRES_SSIM_MARGIN && secs <= SUPERRES_BUDGET_S,
        format!(
            "TITAN {:.3} dB / {:.4} vs SIREN {:.3} dB / {:.4} (3 seeds): ΔPSNR {dp:+.3} ≥ {SUPERRES_PSNR_MARGIN}, \
             ΔSSIM {ds:+.4} ≥ {SUPERRES_SSIM_MARGIN}; {secs:.0} s ≤ {SUPERRES_BUDGET_S:.0} s \
             [reference: TITAN 21.7 / 0.83, SIREN 19.6 / 0.75 on a different image]",
            mean(&tp),
            mean(&ts),
            mean(&sp),
            mean(&ss)
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut table: HashMap<(&str, usize), f64> = HashMap::new();
    for model in ["titan", "siren"] {
        for m in [30usize, 100] {
            let mut ps = Vec::new();
            for seed in SHARED_SEEDS {
                let angles = format!("angles={m}");
                let c = load(&format!("ct_{model}.toml"), &[seed, &angles]);
                let out = harness::run(&c).unwrap();
                println!("    {model} m={m} {seed}: {:.3} dB / {:.4}", psnr(&out), out.report.ssim);
                ps.push(psnr(&out));
            }
            table.insert((model, m), mean(&ps));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let t = |model, m| table[&(model, m)];
    let pass = t("titan", 30) > t("siren", 30)
        && t("titan", 100) > t("siren", 100)
        && t("titan", 100) - t("titan", 30) >= CT_PSNR_GAIN
        && t("siren", 100) - t("siren", 30) >= CT_PSNR_GAIN
        && secs <= CT_BUDGET_S;
    verdict(
        pass,
        format!(
            "mean PSNR (3 seeds) m=30: TITAN {:.3} vs SIREN {:.3}; m=100: TITAN {:.3} vs SIREN {:.3}; \
             gains TITAN {:+.3}, SIREN {:+.3} ≥ {CT_PSNR_GAIN}; {secs:.0} s ≤ {CT_BUDGET_S:.0} s \
             [reference: m=30 29.9 vs 28.5, m=100 36.1 vs 33.2 on a real CT slice]",
            t("titan", 30),
            t("siren", 30),
            t("titan", 100),
            t("siren", 100),
            t("titan", 100) - t("titan", 30),
            t("siren", 100) - t("siren", 30),
        ),
    )
}

// ---------------------------------------------------------------- 5

/// Checks the primal/dual identity and the sparsity accounting after every
/// update.
#[derive(Default)]
struct BregmanAudit {
    steps: usize,
    violations: usize,
    count_mismatches: usize,
}

impl StepObserver for BregmanAudit {
    fn after_step(&mut self, _: usize, _: f64, model: &AnyModel, optimizer: &OptimizerState) {
        let b = optimizer.bregman().expect("Bregman run");
        let p = model.parametric();
        let mut nonzero_sparse = 0;
        for (theta, u) in p.params().iter().zip(&b.duals) {
            if let Some(u) = u {
                if **theta != soft_threshold(u, b.lambda) {
                    self.violations += 1;
                }
                nonzero_sparse += theta.data().iter().filter(|v| **v != 0.0).count();
            }
        }
        if nonzero_sparse != b.active_count() {
            self.count_mismatches += 1;
        }
        self.steps += 1;
    }
}

fn criterion_5() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for opt in ["adabreg", "linbreg"] {
        let c = load(
            "superres_titan.toml",
            &[&format!("optimizer={opt}"), "epochs=500", "image_size=64", "factor=2", "lambda=0.01", "r0=0.1"],
        );
        let mut audit = BregmanAudit::default();
        let out = harness::run_observed(&c, &mut audit).unwrap();
        let ok = audit.steps == 500 && audit.violations == 0 && audit.count_mismatches == 0;
        pass &= ok;
        parts.push(format!(
            "{opt}: {} steps, {} identity violations, {} count mismatches, final nonzero fraction {:.3}",
            audit.steps, audit.violations, audit.count_mismatches, out.report.nonzero_fraction
        ));
    }
    verdict(pass, parts.join("; "))
}

// ---------------------------------------------------------------- 6

fn criterion_6(cache: &mut RunCache) -> Verdict {
    let cfg = load("lipschitz_sweep.toml", &[]);
    let mut seconds = 0.0;
    let rep = run_lipschitz_sweep_with(&cfg, false, &mut |c| {
        let (out, s) = cache.take_or_run(c)?;
        seconds += s;
        println!(
            "    r0={} seed={}: L={:.3} nonzero={:.3} PSNR {:.3}",
            c.r0,
            c.seed,
            out.lipschitz.as_ref().map_or(f64::NAN, |l| l.constant),
            out.report.nonzero_fraction,
            psnr(&out)
        );
        Ok(out)
    })
    .unwrap();
    print!("{}", harness::sweep_csv_string(&rep.rows).lines().map(|l| format!("    {l}\n")).collect::<String>());
    let rows = &rep.rows;
    let first_exceeds_last = rows[0].mean_lipschitz > rows[rows.len() - 1].mean_lipschitz;
    // each adjacent increase is a violation; one is tolerated if it lies
    // within one standard error (the larger of the two points')
    let mut violations = 0;
    let mut within = true;
    for w in rows.windows(2) {
        if w[1].mean_lipschitz > w[0].mean_lipschitz {
            violations += 1;
            within &= w[1].mean_lipschitz - w[0].mean_lipschitz <= w[0].std_error.max(w[1].std_error);
        }
    }
    let trend = violations == 0 || (violations == 1 && within);
    let means: Vec<String> =
        rows.iter().map(|r| format!("r0={}: {:.3}±{:.3}", r.r0, r.mean_lipschitz, r.std_error)).collect();
    verdict(
        first_exceeds_last && trend && seconds <= SWEEP_BUDGET_S,
        format!(
            "mean L {} ({} seeds); L(r0=0.01) > L(r0=1): {first_exceeds_last}; adjacent increases {violations}; \
             {seconds:.0} s of training ≤ {SWEEP_BUDGET_S:.0} s",
            means.join(", "),
            cfg.sweep_seeds
        ),
    )
}

// ---------------------------------------------------------------- 7

fn files(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names.iter().map(|n| std::fs::read(dir.join(n)).unwrap_or_else(|e| panic!("{n}: {e}"))).collect()
}

fn criterion_7() -> Verdict {
    let small = ["epochs=40", "image_size=32", "depth=3", "width=16", "siren_width=32"];
    let mut checked = Vec::new();
    let mut pass = true;
    for (cfg_name, extra, outputs) in [
        (
            "superres_titan.toml",
            &["lipschitz=true"][..],
            &["report.json", "loss.csv", "lipschitz_field.csv", "checkpoint.titan"][..],
        ),
        ("superres_siren.toml", &[], &["report.json", "loss.csv", "reconstruction.png"]),
        ("ct_titan.toml", &["angles=12"], &["report.json", "loss.csv", "reconstruction.pgm", "checkpoint.titan"]),
    ] {
        let mut ov: Vec<&str> = small.to_vec();
        ov.extend_from_slice(extra);
        // Both repetitions write to the same directory, because the report
        // echoes the config and with it the output directory.
        let dir = scratch().join(format!("determinism/{cfg_name}"));
        let mut runs = Vec::new();
        for _ in 0..2 {
            let _ = std::fs::remove_dir_all(&dir);
            let mut c = load(cfg_name, &ov);
            c.output_dir = dir.clone();
            harness::run_and_write(&c).unwrap();
            runs.push(files(&c.output_dir, outputs));
        }
        let same = runs[0] == runs[1];
        let ck = dir.join("checkpoint.titan");
        let regenerated = if ck.exists() {
            let (r, _) = harness::report_from_checkpoint(&ck).unwrap();
            let text = serde_json::to_string_pretty(&r).unwrap() + "\n";
            text.as_bytes() == runs[0][0].as_slice()
        } else {
            true
        };
        pass &= same && regenerated;
        checked.push(format!("{cfg_name}: files identical {same}, report regenerated {regenerated}"));
    }
    let dir = scratch().join("determinism/sweep");
    let mut csvs = Vec::new();
    for _ in 0..2 {
        let _ = std::fs::remove_dir_all(&dir);
        let mut c = load("lipschitz_sweep.toml", &small);
        c.r0_values = vec![0.1, 1.0];
        c.sweep_seeds = 2;
        c.output_dir = dir.clone();
        harness::run_lipschitz_sweep(&c, true).unwrap();
        csvs.push(files(&c.output_dir, &["lipschitz_sweep.csv", "sweep_report.json"]));
    }
    pass &= csvs[0] == csvs[1];
    checked.push(format!("sweep CSV identical {}", csvs[0] == csvs[1]));
    verdict(pass, checked.join("; "))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Verdict {
    let c = load("superres_256.toml", &[]);
    let start = Instant::now();
    let out = match harness::run(&c) {
        Ok(o) => o,
        Err(e) => return verdict(false, format!("full-scale run failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let p = psnr(&out);
    let ratio = out.report.final_loss / out.report.initial_loss;
    let in_band = (p - REFERENCE_TITAN_PSNR).abs() <= REFERENCE_BAND;
    if !in_band {
        println!(
            "    calibration warning: PSNR {p:.3} dB outside {REFERENCE_TITAN_PSNR} ± {REFERENCE_BAND} dB \
             (different source image)"
        );
    }
    verdict(
        ratio < 0.1,
        format!(
            "256x256 from 64x64, {} epochs in {secs:.0} s: PSNR {p:.3} dB, SSIM {:.4}, nonzero {:.3}; \
             band {REFERENCE_TITAN_PSNR}±{REFERENCE_BAND}: {}; final/initial loss {ratio:.2e} < 0.1",
            c.epochs,
            out.report.ssim,
            out.report.nonzero_fraction,
            if in_band { "inside" } else { "outside (calibration warning)" }
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut cache = RunCache::default();
    let mut failures = Vec::new();
    let names = [
        "gradient correctness",
        "Radon adjoint",
        "super-resolution ordering",
        "CT ordering",
        "Bregman invariant",
        "Lipschitz trend",
        "determinism",
        "full-scale spot check",
    ];
    for n in 1..=8u32 {
        if !wanted(n) {
            continue;
        }
        let t = Instant::now();
        let v = match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(&mut cache),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(&mut cache),
            7 => criterion_7(),
            _ => criterion_8(),
        };
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "{status} criterion {n} ({}): {} [{:.0} s]",
            names[n as usize - 1],
            v.detail,
            t.elapsed().as_secs_f64()
        );
        if !v.pass {
            failures.push(n);
        }
    }
    if !failures.is_empty() {
        println!("failed criteria: {failures:?}");
        let strict = std::env::var("TITAN_ACCEPTANCE_STRICT").is_ok_and(|v| !v.is_empty() && v != "0");
        if strict {
            std::process::exit(1);
        }
    }
}
