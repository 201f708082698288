//! Randomized multilevel estimators of composition gradients.
//!
//! The estimators draw a random level `N`, spend `2^(N+n0+1)` inner draws at that
//! level, and reweight the antithetic level difference by `1/P(N)` so that the
//! telescoping sum over levels is reproduced in expectation.

mod diagnostics;
mod level;
mod mlmc;

pub use diagnostics::{estimator_diagnostics, DiagnosticsRecord, RunningMoments};
pub use level::{
    expected_inner_draws, level_pmf, sample_level, sample_truncated_level, truncated_level_pmf,
};
pub use mlmc::{
    coupled_gradient_pair, draw_level_plan, level_estimator_value, simulate_gradient,
    unbiased_gradient, unbiased_gradient_finite, variance_reduced_gradient, LevelPlan,
    MAX_LOG2_DRAWS,
};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Which level scheme an estimator uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EstimatorForm {
    /// Untruncated geometric level; works for any inner family.
    #[default]
    Geometric,
    /// Level truncated at `⌊log2 m_v⌋ - n0`, with full enumeration at the top.
    /// Requires a finite inner family.
    Truncated,
}

/// Base level `n0` and rate `gamma` of the level distribution `P(N = n) = (1-p) p^n`, `p = 2^-gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    n0: u32,
    gamma: f64,
    form: EstimatorForm,
}

impl EstimatorConfig {
    /// Rejects `gamma` outside the open interval `(1, 2)`: at or below 1 the expected
    /// cost is infinite, at or above 2 the variance is.
    pub fn new(n0: u32, gamma: f64) -> Result<Self> {
        if !(gamma > 1.0 && gamma < 2.0) {
            return Err(Error::InvalidConfig(format!(
                "rate parameter gamma must lie in (1, 2), got {gamma}"
            )));
        }
        if n0 >= MAX_LOG2_DRAWS {
            return Err(Error::InvalidConfig(format!(
                "base level {n0} is too large"
            )));
        }
        Ok(EstimatorConfig {
            n0,
            gamma,
            form: EstimatorForm::Geometric,
        })
    }

    pub fn with_form(mut self, form: EstimatorForm) -> Self {
        self.form = form;
        self
    }

    pub fn n0(&self) -> u32 {
        self.n0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn form(&self) -> EstimatorForm {
        self.form
    }

    /// `p = 0.5^gamma`, the probability of moving one level up.
    pub fn p_geom(&self) -> f64 {
        0.5f64.powf(self.gamma)
    }
}

/// One simulated gradient together with the randomness it consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSample {
    pub grad: DVector<f64>,
    /// Realized level (`N`, or `N2` for the truncated form; 0 on the exact branch).
    pub level: u32,
    /// Inner evaluations performed at one point.
    pub inner_draws: u64,
    /// Outer index the sample was drawn for.
    pub component: usize,
}
