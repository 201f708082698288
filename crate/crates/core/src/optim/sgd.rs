use nalgebra::DVector;

use super::trace::{Recorder, RunStatus, RunTrace};
use super::DEFAULT_DIVERGENCE_BOUND;
use crate::error::{Error, Result};
use crate::estimator::{simulate_gradient, EstimatorConfig};
use crate::problem::{check_point, CompositionProblem};
use crate::random::RandomSource;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `scale / (t + offset)` at step `t = 1, 2, ...`.
    InverseTime {
        scale: f64,
        offset: f64,
    },
}

impl StepSchedule {
    pub fn step(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant(l) => l,
            StepSchedule::InverseTime { scale, offset } => scale / (t as f64 + offset),
        }
    }
}

/// SGD on simulated unbiased gradients; records the start, every `stride` steps and the end.
pub fn simulated_sgd<P: CompositionProblem + ?Sized>(
    problem: &P,
    x0: &DVector<f64>,
    steps: usize,
    schedule: StepSchedule,
    estimator: &EstimatorConfig,
    stride: usize,
    rnd: &RandomSource,
) -> Result<RunTrace> {
    check_point(problem, x0)?;
    if stride == 0 {
        return Err(Error::InvalidConfig(
            "record stride must be at least 1".into(),
        ));
    }
    let mut rec = Recorder::new();
    rec.record(problem, 0, x0, None);
    let mut x = x0.clone();
    let mut records = 0;
    for t in 1..=steps {
        let mut rng = rnd.substream(1, t as u64, 0);
        let v = problem.sample_outer(&mut rng);
        let sample = match simulate_gradient(problem, v, &x, estimator, &mut rng) {
            Ok(s) => s,
            Err(e @ (Error::NonFinite { .. } | Error::LevelTooDeep { .. })) => {
                return Ok(rec.finish(RunStatus::Overflow {
                    epoch: records + 1,
                    message: e.to_string(),
                }))
            }
            Err(e) => return Err(e),
        };
        rec.inner_evals += sample.inner_draws;
        x.axpy(-schedule.step(t), &sample.grad, 1.0);
        rec.steps += 1;
        let norm = x.norm();
        if !(norm <= DEFAULT_DIVERGENCE_BOUND) {
            return Ok(rec.finish(RunStatus::Diverged {
                epoch: records + 1,
                norm,
            }));
        }
        if t % stride == 0 || t == steps {
            records += 1;
            rec.record(problem, records, &x, None);
        }
    }
    Ok(rec.finish(RunStatus::Completed))
}
