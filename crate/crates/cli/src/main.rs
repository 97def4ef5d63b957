use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sparsetrack_cli::{checks, config::RunConfig, runner, synth};

#[derive(Parser)]
#[command(name = "sparsetrack", version, about = "Sparse coding-and-counting tracker")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Track a PGM sequence described by a JSON run config.
    Track {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for particle evaluation: 0 = auto, 1 = serial.
        /// Defaults to the SPARSETRACK_THREADS env var, then auto.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Recompute metrics from a results file against ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic PGM sequence with exact ground truth.
    Gen {
        #[arg(long, value_enum)]
        kind: synth::SynthKind,
        #[arg(long)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the proximal-operator oracle agreement suite.
    ProxCheck,
    /// Run the solver oracle dominance suite.
    SolveCheck,
}

fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("SPARSETRACK_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(0)
}

fn run() -> anyhow::Result<bool> {
    match Cli::parse().cmd {
        Cmd::Track { config, threads } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = runner::run_track(&cfg, thread_count(threads))?;
            println!(
                "tracked {} frames at {:.2} fps (mean CLE {:.3} px, mean overlap {:.3})",
                outcome.records.len(),
                outcome.fps,
                outcome.metrics.mean_cle,
                outcome.metrics.mean_overlap
            );
            println!("results: {}", outcome.results_path.display());
            println!("metrics: {}", outcome.metrics_path.display());
            Ok(true)
        }
        Cmd::Eval { results, gt, out } => {
            let report = runner::eval_files(&results, &gt)?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(path) => std::fs::write(&path, json)?,
                None => println!("{json}"),
            }
            eprintln!(
                "mean CLE {:.3} px, mean overlap {:.3}, success AUC {:.3}",
                report.mean_cle, report.mean_overlap, report.success_auc
            );
            Ok(true)
        }
        Cmd::Gen { kind, frames, seed, out } => {
            synth::generate(kind, frames, seed, &out)?;
            println!("wrote {frames} frames and gt.txt to {}", out.display());
            Ok(true)
        }
        Cmd::ProxCheck => {
            let outcome = checks::prox_check();
            println!(
                "prox-check: {}/{} cases passed, max objective gap {:.3e}",
                outcome.cases - outcome.failures,
                outcome.cases,
                outcome.max_gap
            );
            Ok(outcome.passed())
        }
        Cmd::SolveCheck => {
            let outcome = checks::solve_check();
            println!(
                "solve-check: {}/{} cases passed, max objective gap {:.3e}",
                outcome.cases - outcome.failures,
                outcome.cases,
                outcome.max_gap
            );
            Ok(outcome.passed())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
