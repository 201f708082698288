use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;

use super::{simulate_gradient, EstimatorConfig};
use crate::error::{Error, Result};
use crate::problem::CompositionProblem;

/// Welford accumulator for the componentwise mean and variance of vector samples.
#[derive(Clone, Debug)]
pub struct RunningMoments {
    count: u64,
    mean: DVector<f64>,
    m2: DVector<f64>,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        RunningMoments {
            count: 0,
            mean: DVector::zeros(dim),
            m2: DVector::zeros(dim),
        }
    }

    pub fn push(&mut self, sample: &DVector<f64>) {
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for ((m, s2), &x) in self
            .mean
            .iter_mut()
            .zip(self.m2.iter_mut())
            .zip(sample.iter())
        {
            let delta = x - *m;
            *m += delta * inv;
            *s2 += delta * (x - *m);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Unbiased sample variance per component (zero with fewer than two samples).
    pub fn variance(&self) -> DVector<f64> {
        if self.count < 2 {
            return DVector::zeros(self.mean.len());
        }
        &self.m2 / (self.count - 1) as f64
    }

    /// Standard error of the mean per component.
    pub fn standard_error(&self) -> DVector<f64> {
        let n = self.count.max(1) as f64;
        self.variance().map(|v| (v / n).sqrt())
    }
}

/// Sample statistics of repeated independent estimates at a fixed `(v, x)`.
#[derive(Clone, Debug)]
pub struct DiagnosticsRecord {
    pub draws: u64,
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    pub standard_error: DVector<f64>,
    /// Trace of the sample covariance.
    pub cov_trace: f64,
    /// Mean inner evaluations per estimate.
    pub mean_cost: f64,
    pub level_histogram: BTreeMap<u32, u64>,
}

pub fn estimator_diagnostics<P: CompositionProblem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
    config: &EstimatorConfig,
    draws: u64,
    rng: &mut R,
) -> Result<DiagnosticsRecord> {
    if draws == 0 {
        return Err(Error::InvalidConfig(
            "diagnostics need at least one draw".into(),
        ));
    }
    let mut moments = RunningMoments::new(problem.dimension());
    let mut histogram = BTreeMap::new();
    let mut cost = 0u64;
    for _ in 0..draws {
        let sample = simulate_gradient(problem, v, x, config, rng)?;
        moments.push(&sample.grad);
        *histogram.entry(sample.level).or_insert(0) += 1;
        cost += sample.inner_draws;
    }
    let variance = moments.variance();
    Ok(DiagnosticsRecord {
        draws,
        cov_trace: variance.sum(),
        standard_error: moments.standard_error(),
        mean: moments.mean().clone(),
        variance,
        mean_cost: cost as f64 / draws as f64,
        level_histogram: histogram,
    })
}
