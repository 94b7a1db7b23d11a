//! End-to-end runs on tiny problems: outputs, checkpoints, report
//! regeneration, determinism and sweeps.

use titan::checkpoint;
use titan::config::ExperimentConfig;
use titan::harness::{
    self, mean_and_stderr, report_from_checkpoint, run, run_lipschitz_sweep, run_with_ground_truth, write_outputs,
};
use titan::model::AnyModel;
use titan::HarnessError;
use titan_core::models::NormMode;

fn cfg(extra: &[&str]) -> ExperimentConfig {
    let base = r#"
task = "superres"
image = "phantom"
image_size = 16
factor = 2
epochs = 25
depth = 2
width = 8
siren_width = 16
dd_n0 = 4
dd_width = 8
"#;
    let ov: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::from_toml(base, &ov).unwrap()
}

#[test]
fn every_model_and_optimizer_combination_trains() {
    for model in ["titan", "siren", "deep_decoder"] {
        for opt in ["adam", "adabreg", "linbreg"] {
            for task in ["superres", "ct"] {
                let c =
                    cfg(&[&format!("model={model}"), &format!("optimizer={opt}"), &format!("task={task}"), "angles=8"]);
                let out = run(&c).unwrap_or_else(|e| panic!("{model}/{opt}/{task}: {e}"));
                let r = &out.report;
                assert_eq!(r.loss_curve.len(), 25);
                assert!(r.final_loss.is_finite() && r.ssim.is_finite());
                assert_eq!(out.reconstruction.shape(), &[16, 16]);
                if opt == "adam" {
                    assert_eq!(r.nonzero_params, r.dense_params, "{model}");
                    assert_eq!(r.active_duals, None);
                } else {
                    assert!(r.nonzero_params <= r.dense_params);
                    assert!(r.active_duals.is_some());
                }
            }
        }
    }
}

#[test]
fn adam_training_reduces_the_loss() {
    let out = run(&cfg(&["epochs=200", "lr=5e-3"])).unwrap();
    assert!(out.report.final_loss < 0.1 * out.report.initial_loss, "{:?}", out.report.final_loss);
}

#[test]
fn fitting_without_downsampling_exceeds_30_db() {
    let out = run(&cfg(&["factor=1", "epochs=1500", "model=siren", "siren_width=64", "omega0=10"])).unwrap();
    let psnr = out.report.psnr_db.unwrap_or(f64::INFINITY);
    assert!(psnr > 30.0, "PSNR {psnr}");
}

#[test]
fn full_noiseless_measurements_recover_a_deep_decoder_image() {
    // ground truth in the range of the model: a deep decoder output
    let c = cfg(&[
        "task=ct",
        "model=deep_decoder",
        "dd_width=16",
        "angles=16",
        "noise_sigma=0",
        "epochs=5000",
        "lr=1e-2",
        "schedule=cosine",
    ]);
    let generator = AnyModel::build_seeded(&c, 1, 99).unwrap();
    let (gt, _) = generator.render(16, 16, NormMode::Batch).unwrap();
    // stretch to [0, 1] so PSNR uses the same peak as the reconstruction range
    let (lo, hi) = gt.data().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let gt = gt.map(|v| (v - lo) / (hi - lo));
    let out = run_with_ground_truth(&c, gt, &mut ()).unwrap();
    let psnr = out.report.psnr_db.unwrap_or(f64::INFINITY);
    assert!(psnr > 40.0, "PSNR {psnr}");
}

#[test]
fn runs_are_bit_identical() {
    for extra in [&["optimizer=adabreg", "lipschitz=true"][..], &["task=ct", "angles=6", "model=siren"]] {
        let a = run(&cfg(extra)).unwrap();
        let b = run(&cfg(extra)).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.reconstruction, b.reconstruction);
        let ja = serde_json::to_string(&a.report).unwrap();
        assert_eq!(ja, serde_json::to_string(&b.report).unwrap());
    }
    let a = run(&cfg(&["seed=1"])).unwrap();
    let b = run(&cfg(&["seed=2"])).unwrap();
    assert_ne!(a.report.loss_curve, b.report.loss_curve);
}

#[test]
fn outputs_checkpoint_and_regenerated_report_agree() {
    for extra in [
        &["optimizer=adabreg", "lipschitz=true"][..],
        &["model=deep_decoder", "task=ct", "angles=5"],
        &["freeze_norm_stats=true", "optimizer=linbreg"],
    ] {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&cfg(extra)).unwrap();
        write_outputs(&out, dir.path()).unwrap();
        for f in [
            "report.json",
            "loss.csv",
            "config.toml",
            "checkpoint.titan",
            "timing.json",
            "reconstruction.pgm",
            "ground_truth.pgm",
        ] {
            assert!(dir.path().join(f).is_file(), "{f} missing for {extra:?}");
        }
        let ck = checkpoint::load(&dir.path().join("checkpoint.titan")).unwrap();
        assert_eq!(ck.model, out.model);
        assert_eq!(ck.optimizer, out.optimizer);
        let (report, recon) = report_from_checkpoint(&dir.path().join("checkpoint.titan")).unwrap();
        assert_eq!(report, out.report);
        assert_eq!(recon, out.reconstruction);
        let written = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert_eq!(written, serde_json::to_string_pretty(&report).unwrap() + "\n");

        let loss_csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
        let lines: Vec<&str> = loss_csv.lines().collect();
        assert_eq!(lines[0], "epoch,loss");
        assert_eq!(lines.len(), 26);
        assert_eq!(lines[1].split(',').nth(1).unwrap().parse::<f64>().unwrap(), out.report.loss_curve[0]);
    }
}

#[test]
fn lipschitz_field_csv_has_one_row_per_pixel() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&cfg(&["lipschitz=true"])).unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("lipschitz_field.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 256);
    let max = rows.iter().map(|r| r[4]).fold(0.0, f64::max);
    assert_eq!(max, out.report.lipschitz.unwrap().constant);
}

#[test]
fn corrupt_checkpoints_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&cfg(&["epochs=2"])).unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let path = dir.path().join("checkpoint.titan");
    let bytes = std::fs::read(&path).unwrap();

    let cut = dir.path().join("cut.titan");
    std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(checkpoint::load(&cut), Err(HarnessError::Format { .. })));

    let bad = dir.path().join("bad.titan");
    let mut b = bytes.clone();
    b[0] = b'X';
    std::fs::write(&bad, b).unwrap();
    let err = checkpoint::load(&bad).err().unwrap();
    assert!(err.to_string().contains("magic"), "{err}");
}

#[test]
fn sweep_with_one_seed_and_one_r0_writes_one_row_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(&["task=lipschitz_sweep", "r0_values=[0.5]", "sweep_seeds=1", "epochs=10"]);
    c.output_dir = dir.path().join("sweep");
    let rep = run_lipschitz_sweep(&c, true).unwrap();
    assert_eq!(rep.rows.len(), 1);
    assert_eq!(rep.rows[0].seeds, 1);
    assert_eq!(rep.rows[0].std_error, 0.0);
    let csv_path = c.output_dir.join("lipschitz_sweep.csv");
    let first = std::fs::read(&csv_path).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().next().unwrap(), "r0,mean_lipschitz,std_error,mean_nonzero_fraction,seeds");
    assert!(c.output_dir.join("r0_0.5/seed_0/report.json").is_file());

    run_lipschitz_sweep(&c, true).unwrap();
    assert_eq!(std::fs::read(&csv_path).unwrap(), first);
}

#[test]
fn sweep_cells_use_adabreg_titan_with_consecutive_seeds() {
    let c = cfg(&["task=lipschitz_sweep", "seed=7"]);
    let cell = harness::sweep_cell_config(&c, 0.1, 2);
    assert_eq!(cell.seed, 9);
    assert_eq!(cell.optimizer, titan::config::OptimizerKind::Adabreg);
    assert!(cell.lipschitz);
    assert_eq!(cell.output_dir, c.output_dir.join("r0_0.1").join("seed_9"));
}

#[test]
fn standard_error_examples() {
    assert_eq!(mean_and_stderr(&[3.0]), (3.0, 0.0));
    let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    // sample sd = sqrt(5/3), / sqrt(4)
    assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
}

#[test]
fn divergence_is_reported_with_exit_code_3() {
    let err = run(&cfg(&["lr=1e300", "epochs=50"])).err().expect("must diverge");
    assert!(matches!(err, HarnessError::Divergence { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}
