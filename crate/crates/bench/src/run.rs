use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use simgrad_core::optim::{
    gradient_descent, reference_solve, simulated_scsg, simulated_sgd, simulated_svrg, RunStatus,
    RunTrace, ScsgConfig, StepSchedule, SvrgConfig,
};
use simgrad_core::{CompositionProblem, DVector, RandomSource};

use crate::config::{AlgorithmSpec, BenchConfig, ScheduleSpec};
use crate::instance::Instance;
use crate::output::{log10_gap, write_trace};
use crate::BenchError;

#[derive(Clone, Debug, Serialize)]
pub struct CellSummary {
    pub algorithm: String,
    pub seed: u64,
    pub file: String,
    pub status: String,
    pub epochs_recorded: usize,
    pub final_log10_gap: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReferenceSummary {
    pub f_star: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub tolerance: f64,
    /// Add to `f_star` for the unshifted Cox objective; zero for synthetic problems.
    pub objective_offset: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub reference: ReferenceSummary,
    pub cells: Vec<CellSummary>,
}

impl RunSummary {
    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| c.status != "completed")
    }
}

/// Worker count for parallel cells: `BENCH_THREADS` when set to a positive integer.
pub fn thread_count() -> Result<Option<usize>, BenchError> {
    match std::env::var("BENCH_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(BenchError::Config(format!(
                "BENCH_THREADS must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(None),
    }
}

pub fn starting_point(
    spec: Option<&Vec<f64>>,
    p: usize,
    what: &str,
) -> Result<DVector<f64>, BenchError> {
    match spec {
        None => Ok(DVector::zeros(p)),
        Some(v) if v.len() == p && v.iter().all(|c| c.is_finite()) => {
            Ok(DVector::from_vec(v.clone()))
        }
        Some(v) => Err(BenchError::Config(format!(
            "{what} has {} finite entries required, got {} values",
            p,
            v.len()
        ))),
    }
}

fn status_label(status: &RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".into(),
        RunStatus::Diverged { epoch, norm } => format!("diverged at epoch {epoch} (norm {norm:e})"),
        RunStatus::Overflow { epoch, message } => format!("overflow at epoch {epoch}: {message}"),
    }
}

pub fn run_algorithm(
    problem: &Instance,
    alg: &AlgorithmSpec,
    config: &BenchConfig,
    x0: &DVector<f64>,
    seed: u64,
) -> Result<RunTrace, BenchError> {
    let cfg_err = |e: simgrad_core::Error| BenchError::Config(e.to_string());
    let epochs = config.run.epochs;
    let estimator = alg.estimator(&config.estimator).build()?;
    let rnd = RandomSource::new(seed);
    let trace = match alg {
        AlgorithmSpec::Svrg {
            step_size,
            inner_steps,
            epoch_output,
            ..
        } => {
            let cfg = SvrgConfig::new(epochs, *inner_steps, *step_size, estimator)
                .map_err(cfg_err)?
                .with_epoch_output((*epoch_output).into());
            simulated_svrg(problem, x0, &cfg, &rnd)?
        }
        AlgorithmSpec::Scsg {
            step_size,
            inner_steps,
            epoch_output,
            batch_size,
            replicates,
            ..
        } => {
            let base = SvrgConfig::new(epochs, *inner_steps, *step_size, estimator)
                .map_err(cfg_err)?
                .with_epoch_output((*epoch_output).into());
            let cfg = ScsgConfig::new(base, *batch_size, *replicates).map_err(cfg_err)?;
            simulated_scsg(problem, x0, &cfg, &rnd).map_err(|e| match e {
                simgrad_core::Error::InvalidConfig(m) => BenchError::Config(m),
                other => other.into(),
            })?
        }
        AlgorithmSpec::Sgd {
            schedule,
            steps_per_epoch,
            ..
        } => {
            let schedule = match *schedule {
                ScheduleSpec::Constant { step_size } => StepSchedule::Constant(step_size),
                ScheduleSpec::InverseTime { scale, offset } => {
                    StepSchedule::InverseTime { scale, offset }
                }
            };
            simulated_sgd(
                problem,
                x0,
                epochs * steps_per_epoch,
                schedule,
                &estimator,
                *steps_per_epoch,
                &rnd,
            )?
        }
        AlgorithmSpec::Gd { step_size, .. } => gradient_descent(problem, x0, epochs, *step_size)?,
    };
    Ok(trace)
}

/// Runs every (algorithm, seed) cell, writes one trace CSV each plus `summary.json`.
///
/// Failed cells still write their partial trace; the caller decides the exit status
/// from [`RunSummary::any_failed`].
pub fn cmd_run(config: &BenchConfig, out_dir: &Path) -> Result<RunSummary, BenchError> {
    let problem = Instance::build(&config.problem)?;
    let p = problem.dimension();
    let x0 = starting_point(config.run.x0.as_ref(), p, "run.x0")?;
    let threads = thread_count()?;
    fs::create_dir_all(out_dir)?;

    let reference = reference_solve(
        &problem,
        &DVector::zeros(p),
        1.0,
        config.run.reference_tol,
        config.run.reference_max_iter,
    )?;
    let f_star = reference.objective;

    let cells: Vec<(&AlgorithmSpec, u64)> = config
        .algorithms
        .iter()
        .flat_map(|a| config.run.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let run_cell = |&(alg, seed): &(&AlgorithmSpec, u64)| -> Result<CellSummary, BenchError> {
        let trace = run_algorithm(&problem, alg, config, &x0, seed)?;
        let file = format!("{}_seed{seed}.csv", alg.name());
        let path: PathBuf = out_dir.join(&file);
        write_trace(
            BufWriter::new(File::create(&path)?),
            &trace,
            f_star,
            config.run.wall_clock,
        )?;
        Ok(CellSummary {
            algorithm: alg.name(),
            seed,
            file,
            status: status_label(&trace.status),
            epochs_recorded: trace.records.len(),
            final_log10_gap: trace
                .records
                .last()
                .and_then(|r| r.objective)
                .map(|f| log10_gap(f, f_star)),
        })
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let summaries = pool.install(|| {
        cells
            .par_iter()
            .map(run_cell)
            .collect::<Result<Vec<_>, _>>()
    })?;

    let summary = RunSummary {
        config_hash: config.hash(),
        seeds: config.run.seeds.clone(),
        reference: ReferenceSummary {
            f_star,
            grad_norm: reference.grad_norm,
            iterations: reference.iterations,
            tolerance: config.run.reference_tol,
            objective_offset: problem.objective_offset(),
        },
        cells: summaries,
    };
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| BenchError::Io(std::io::Error::other(e)))?;
    fs::write(out_dir.join("summary.json"), text + "\n")?;
    Ok(summary)
}
