use nalgebra::DVector;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::trace::{Recorder, RunStatus, RunTrace};
use super::{EpochOutput, DEFAULT_DIVERGENCE_BOUND};
use crate::error::{Error, Result};
use crate::estimator::{simulate_gradient, variance_reduced_gradient, EstimatorConfig};
use crate::problem::{
    check_point, exact_full_cost, exact_full_gradient, CompositionProblem, OuterFamily,
};
use crate::random::RandomSource;

/// Epoch schedule shared by simulated SVRG and SCSG.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvrgConfig {
    pub epochs: usize,
    pub inner_steps: usize,
    pub step_size: f64,
    pub epoch_output: EpochOutput,
    pub estimator: EstimatorConfig,
    pub divergence_bound: f64,
}

impl SvrgConfig {
    pub fn new(
        epochs: usize,
        inner_steps: usize,
        step_size: f64,
        estimator: EstimatorConfig,
    ) -> Result<Self> {
        if epochs == 0 || inner_steps == 0 {
            return Err(Error::InvalidConfig(
                "epochs and inner steps must be at least 1".into(),
            ));
        }
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive, got {step_size}"
            )));
        }
        Ok(SvrgConfig {
            epochs,
            inner_steps,
            step_size,
            epoch_output: EpochOutput::default(),
            estimator,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
        })
    }

    pub fn with_epoch_output(mut self, output: EpochOutput) -> Self {
        self.epoch_output = output;
        self
    }

    pub fn with_divergence_bound(mut self, bound: f64) -> Self {
        self.divergence_bound = bound;
        self
    }
}

/// SVRG schedule plus the anchor batch size `B` and replicate count `K`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScsgConfig {
    pub base: SvrgConfig,
    pub batch_size: usize,
    pub replicate_count: usize,
}

impl ScsgConfig {
    pub fn new(base: SvrgConfig, batch_size: usize, replicate_count: usize) -> Result<Self> {
        if batch_size == 0 || replicate_count == 0 {
            return Err(Error::InvalidConfig(
                "batch size and replicate count must be at least 1".into(),
            ));
        }
        Ok(ScsgConfig {
            base,
            batch_size,
            replicate_count,
        })
    }
}

fn overflow(epoch: usize, err: Error) -> std::result::Result<RunStatus, Error> {
    match err {
        Error::NonFinite { .. } | Error::LevelTooDeep { .. } => Ok(RunStatus::Overflow {
            epoch,
            message: err.to_string(),
        }),
        other => Err(other),
    }
}

/// The inner loop common to both methods; `anchor_gradient` supplies `h̃` and its cost.
fn run_epochs<P, F>(
    problem: &P,
    x0: &DVector<f64>,
    config: &SvrgConfig,
    rnd: &RandomSource,
    mut anchor_gradient: F,
) -> Result<RunTrace>
where
    P: CompositionProblem + ?Sized,
    F: FnMut(usize, &DVector<f64>) -> Result<(DVector<f64>, u64)>,
{
    check_point(problem, x0)?;
    let m = config.inner_steps;
    let mut rec = Recorder::new();
    rec.record(problem, 0, x0, None);
    let mut anchor = x0.clone();

    for s in 1..=config.epochs {
        let (h, cost) = match anchor_gradient(s, &anchor) {
            Ok(v) => v,
            Err(e) => return Ok(rec.finish(overflow(s, e)?)),
        };
        rec.inner_evals += cost;
        if h.iter().any(|g| !g.is_finite()) {
            return Ok(rec.finish(RunStatus::Overflow {
                epoch: s,
                message: "non-finite anchor gradient".into(),
            }));
        }

        let output_index = match config.epoch_output {
            EpochOutput::Last => None,
            EpochOutput::RandomInner => Some(rnd.substream(s as u64, 0, 0).random_range(0..m)),
        };
        let mut x = anchor.clone();
        let mut chosen = (output_index == Some(0)).then(|| x.clone());
        for t in 1..=m {
            let mut rng = rnd.substream(s as u64, t as u64, 0);
            let v = problem.sample_outer(&mut rng);
            let nu = match variance_reduced_gradient(
                problem,
                v,
                &x,
                &anchor,
                &h,
                &config.estimator,
                &mut rng,
            ) {
                Ok(sample) => {
                    rec.inner_evals += 2 * sample.inner_draws;
                    sample.grad
                }
                Err(e) => return Ok(rec.finish(overflow(s, e)?)),
            };
            x.axpy(-config.step_size, &nu, 1.0);
            rec.steps += 1;
            let norm = x.norm();
            if !(norm <= config.divergence_bound) {
                return Ok(rec.finish(RunStatus::Diverged { epoch: s, norm }));
            }
            if output_index == Some(t) {
                chosen = Some(x.clone());
            }
        }
        anchor = chosen.unwrap_or(x);
        rec.record(problem, s, &anchor, output_index);
    }
    Ok(rec.finish(RunStatus::Completed))
}

/// Simulated SVRG: each epoch anchors on the exact full gradient and takes
/// `inner_steps` coupled variance-reduced steps.
pub fn simulated_svrg<P: CompositionProblem + ?Sized>(
    problem: &P,
    x0: &DVector<f64>,
    config: &SvrgConfig,
    rnd: &RandomSource,
) -> Result<RunTrace> {
    let cost = exact_full_cost(problem)?;
    run_epochs(problem, x0, config, rnd, |_, anchor| {
        Ok((exact_full_gradient(problem, anchor)?, cost))
    })
}

/// Anchor estimate `h̃ = (1/K) Σ_k (1/B) Σ_{v ∈ I_s} W(x̃, v)` over one batch `I_s`
/// shared by all `K` replicates.
pub fn scsg_anchor<P: CompositionProblem + ?Sized>(
    problem: &P,
    anchor: &DVector<f64>,
    config: &ScsgConfig,
    epoch: usize,
    rnd: &RandomSource,
) -> Result<(DVector<f64>, u64)> {
    let mut batch_rng = rnd.substream(epoch as u64, 0, 1);
    let batch: Vec<usize> = match problem.outer_family() {
        OuterFamily::Finite(n) => index::sample(&mut batch_rng, n, config.batch_size).into_vec(),
        OuterFamily::Stochastic => (0..config.batch_size)
            .map(|_| problem.sample_outer(&mut batch_rng))
            .collect(),
    };
    let replicate_key = config.base.inner_steps as u64 + 1;
    let replicates: Vec<(DVector<f64>, u64)> = (0..config.replicate_count)
        .into_par_iter()
        .map(|k| {
            let mut rng = rnd.substream(epoch as u64, replicate_key, k as u64);
            let mut sum = DVector::zeros(problem.dimension());
            let mut cost = 0;
            for &v in &batch {
                let sample =
                    simulate_gradient(problem, v, anchor, &config.base.estimator, &mut rng)?;
                sum += sample.grad;
                cost += sample.inner_draws;
            }
            Ok((sum / batch.len() as f64, cost))
        })
        .collect::<Result<_>>()?;
    let mut h = DVector::zeros(problem.dimension());
    let mut cost = 0;
    for (hk, c) in replicates {
        h += hk;
        cost += c;
    }
    Ok((h / config.replicate_count as f64, cost))
}

/// Simulated SCSG: like [`simulated_svrg`] but the anchor gradient is estimated by
/// [`scsg_anchor`], so no exact full gradient is ever computed.
pub fn simulated_scsg<P: CompositionProblem + ?Sized>(
    problem: &P,
    x0: &DVector<f64>,
    config: &ScsgConfig,
    rnd: &RandomSource,
) -> Result<RunTrace> {
    if let OuterFamily::Finite(n) = problem.outer_family() {
        if config.batch_size > n {
            return Err(Error::InvalidConfig(format!(
                "batch size {} exceeds the {n} outer components",
                config.batch_size
            )));
        }
    }
    run_epochs(problem, x0, &config.base, rnd, |s, anchor| {
        scsg_anchor(problem, anchor, config, s, rnd)
    })
}
