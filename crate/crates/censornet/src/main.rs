//! Command-line entry point: sweep execution, report emission, synthetic
//! dataset generation, and checkpoint probing.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use censornet::io::sweep::write_results_csv;
use censornet::io::{emit_report, read_checkpoint, read_epoch_file, run_experiment, write_epoch_file, ExperimentConfig};
use censornet::nn::RngStream;
use censornet::stats::probe_subject_accuracy;
use censornet::synth::{GenModel, GenModelSpec};
use censornet::train::batch_balanced_accuracy;
use censornet::Error;

/// Environment variable overriding the configured output directory.
const OUTPUT_DIR_ENV: &str = "CENSORNET_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "censornet", about = "Divergence-censoring training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment sweep described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate a results CSV into a summary table and boxplot SVGs.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset and write it as an epoch file.
    MakeSynth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a stored checkpoint on a dataset: task accuracy plus a
    /// subject-probe diagnostic on the censor-visible features.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Deserialize)]
struct SynthFileSpec {
    spec: GenModelSpec,
    trials_per_subject: usize,
    #[serde(default)]
    data_seed: u64,
}

/// 0 success, 1 config error, 2 sweep completed with failed runs.
fn run(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
                if !dir.is_empty() {
                    cfg.output_dir = PathBuf::from(dir);
                }
            }
            let rows = run_experiment(&cfg)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let csv_path = cfg.output_dir.join("results.csv");
            write_results_csv(&csv_path, &rows)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!(
                "wrote {} rows to {} ({} failed)",
                rows.len(),
                csv_path.display(),
                failed
            );
            Ok(if failed > 0 { 2 } else { 0 })
        }
        Command::Report { results, out } => {
            let rows = censornet::io::sweep::read_results_csv(&results)?;
            let written = emit_report(&rows, &out)?;
            for p in written {
                println!("wrote {}", p.display());
            }
            Ok(0)
        }
        Command::MakeSynth { spec, out } => {
            let text = std::fs::read_to_string(&spec)?;
            let file_spec: SynthFileSpec = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {}", spec.display(), e)))?;
            file_spec.spec.validate()?;
            if file_spec.trials_per_subject == 0 {
                return Err(Error::Config("trials_per_subject must be positive".into()));
            }
            let mut rng = RngStream::new(file_spec.data_seed, 6);
            let model = GenModel::realize(&file_spec.spec, &mut rng)?;
            let n = file_spec.trials_per_subject * file_spec.spec.n_nuisance();
            let (batch, _) = model.sample(n, &mut rng)?;
            write_epoch_file(&out, &batch)?;
            println!("wrote {} trials to {}", batch.len(), out.display());
            Ok(0)
        }
        Command::Probe { checkpoint, data } => {
            let ckpt = read_checkpoint(&checkpoint)?;
            let batch = read_epoch_file(&data)?;
            let ba = batch_balanced_accuracy(&ckpt.task, &batch)?;
            let hidden = ckpt.task.encode(&batch.x)?;
            let features = ckpt.task.project(&hidden)?;
            let mut rng = RngStream::new(ckpt.config.seed, 4);
            match probe_subject_accuracy(&features, &batch.s, &mut rng) {
                Ok(p) => println!(
                    "task balanced accuracy {:.6}, subject-probe balanced accuracy {:.6}",
                    ba, p
                ),
                Err(e) => println!(
                    "task balanced accuracy {:.6}, subject probe unavailable: {}",
                    ba, e
                ),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(1)
        }
    }
}
