use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use titan::config::{ExperimentConfig, Task};
use titan::harness;
use titan::Result;

#[derive(Parser)]
#[command(name = "titan", version, about = "Train and evaluate TITAN implicit image representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its outputs.
    Run {
        config: PathBuf,
        /// Replace a config key, e.g. `--override epochs=100`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Recompute the report of a finished run from its checkpoint.
    Report {
        checkpoint: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the Lipschitz-versus-sparsity sweep of a config.
    Sweep {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            if cfg.task == Task::LipschitzSweep {
                let rep = harness::run_lipschitz_sweep(&cfg, true)?;
                print!("{}", harness::sweep_csv_string(&rep.rows));
            } else {
                let rep = harness::run_and_write(&cfg)?;
                let psnr = rep.psnr_db.map_or("identical".to_string(), |p| format!("{p:.3} dB"));
                println!(
                    "final loss {:.6e}  PSNR {psnr}  SSIM {:.4}  -> {}",
                    rep.final_loss,
                    rep.ssim,
                    cfg.output_dir.display()
                );
            }
        }
        Command::Report { checkpoint, output } => {
            let (rep, _) = harness::report_from_checkpoint(&checkpoint)?;
            let mut text = serde_json::to_string_pretty(&rep).expect("report serializes");
            text.push('\n');
            match output {
                Some(p) => std::fs::write(&p, text).map_err(|e| titan::HarnessError::io(&p, e))?,
                None => print!("{text}"),
            }
        }
        Command::Sweep { config, overrides } => {
            let mut overrides = overrides;
            overrides.insert(0, "task=lipschitz_sweep".into());
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let rep = harness::run_lipschitz_sweep(&cfg, true)?;
            print!("{}", harness::sweep_csv_string(&rep.rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
