use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simgrad_bench::estimate::cmd_estimate;
use simgrad_bench::output::fmt_f64;
use simgrad_bench::run::cmd_run;
use simgrad_bench::selftest::run_selftest;
use simgrad_bench::{exit, BenchConfig, BenchError};

#[derive(Parser)]
#[command(name = "bench", about = "Simulated-gradient benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, seed) cell and write trace CSVs plus summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides run.output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides run.epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Comma-separated seeds; overrides run.seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Estimator diagnostics per (n0, gamma), written to estimate.csv.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides estimate.draws.
        #[arg(long)]
        draws: Option<u64>,
    },
    /// Fast property checks.
    Selftest,
}

fn load(path: &Path, edit: impl FnOnce(&mut BenchConfig)) -> Result<BenchConfig, BenchError> {
    let mut config = BenchConfig::load(path)?;
    edit(&mut config);
    config.validate()?;
    Ok(config)
}

fn execute(cli: Cli) -> Result<i32, BenchError> {
    match cli.command {
        Command::Run {
            config,
            out,
            epochs,
            seeds,
        } => {
            let config = load(&config, |c| {
                if let Some(e) = epochs {
                    c.run.epochs = e;
                }
                if let Some(s) = seeds {
                    c.run.seeds = s;
                }
                if let Some(o) = out {
                    c.run.output_dir = o;
                }
            })?;
            let summary = cmd_run(&config, &config.run.output_dir)?;
            println!(
                "F* = {} (gradient norm {:e}); {} traces in {}",
                fmt_f64(summary.reference.f_star),
                summary.reference.grad_norm,
                summary.cells.len(),
                config.run.output_dir.display()
            );
            for cell in summary.cells.iter().filter(|c| c.status != "completed") {
                eprintln!("{} seed {}: {}", cell.algorithm, cell.seed, cell.status);
            }
            Ok(if summary.any_failed() {
                exit::DIVERGED
            } else {
                exit::SUCCESS
            })
        }
        Command::Estimate { config, out, draws } => {
            let config = load(&config, |c| {
                if let Some(d) = draws {
                    c.estimate.draws = d;
                }
                if let Some(o) = out {
                    c.run.output_dir = o;
                }
            })?;
            let rows = cmd_estimate(&config, &config.run.output_dir)?;
            for r in &rows {
                println!(
                    "n0={} gamma={} bias={:.3e} cov_trace={:.4e} cost={:.5} predicted={:.5}",
                    r.n0, r.gamma, r.bias_norm, r.cov_trace, r.mean_cost, r.predicted_cost
                );
            }
            Ok(exit::SUCCESS)
        }
        Command::Selftest => {
            let results = run_selftest();
            for r in &results {
                println!(
                    "{} {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
            }
            Ok(if results.iter().all(|r| r.passed) {
                exit::SUCCESS
            } else {
                exit::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::CONFIG
            } else {
                exit::SUCCESS
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
