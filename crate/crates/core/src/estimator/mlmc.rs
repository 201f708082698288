use nalgebra::DVector;
use rand::Rng;

use super::level::{sample_level, sample_truncated_level};
use super::{EstimatorConfig, EstimatorForm, GradientSample};
use crate::error::{Error, Result};
use crate::problem::{
    add_direct_grad, check_component, check_point, exact_inner_stats, CompositionProblem,
    InnerBatchStats, InnerFamily,
};

/// Largest supported `log2` of the number of inner draws in one estimate.
pub const MAX_LOG2_DRAWS: u32 = 26;

/// The random part of one estimate: the level, its inverse probability and the inner draws.
///
/// A plan holds no reference to `x`, so the same plan evaluated at two points gives
/// the coupled pair used for variance reduction.
#[derive(Clone, Debug)]
pub enum LevelPlan<W> {
    /// `n0 >= ⌊log2 m_v⌋`: enumerate the whole inner family.
    Exact { members: usize },
    /// Level difference over `2^(level+n0+1)` draws split into two halves.
    Antithetic {
        level: u32,
        weight: f64,
        draws: Vec<W>,
    },
    /// Top of the truncated range: exact enumeration minus a `2^n1` subsample.
    Top {
        level: u32,
        weight: f64,
        draws: Vec<W>,
        members: usize,
    },
}

impl<W> LevelPlan<W> {
    pub fn level(&self) -> u32 {
        match self {
            LevelPlan::Exact { .. } => 0,
            LevelPlan::Antithetic { level, .. } | LevelPlan::Top { level, .. } => *level,
        }
    }

    /// Inner evaluations needed to evaluate the plan at one point.
    pub fn inner_draws(&self) -> u64 {
        match self {
            LevelPlan::Exact { members } => *members as u64,
            LevelPlan::Antithetic { draws, .. } => draws.len() as u64,
            LevelPlan::Top { draws, members, .. } => (draws.len() + members) as u64,
        }
    }
}

fn sample_draws<P: CompositionProblem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    v: usize,
    log2_count: u32,
    level: u32,
    rng: &mut R,
) -> Result<Vec<P::InnerDraw>> {
    if log2_count > MAX_LOG2_DRAWS {
        return Err(Error::LevelTooDeep {
            level,
            max_log2: MAX_LOG2_DRAWS,
        });
    }
    Ok((0..1usize << log2_count)
        .map(|_| problem.sample_inner(v, rng))
        .collect())
}

/// Samples the level and the inner draws for one estimate at component `v`.
pub fn draw_level_plan<P: CompositionProblem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    v: usize,
    config: &EstimatorConfig,
    rng: &mut R,
) -> Result<LevelPlan<P::InnerDraw>> {
    check_component(problem, v)?;
    let n0 = config.n0();
    let p = config.p_geom();
    match config.form() {
        EstimatorForm::Geometric => {
            let level = sample_level(config, rng);
            let weight = 1.0 / ((1.0 - p) * p.powi(level as i32));
            let draws = sample_draws(problem, v, level.saturating_add(n0 + 1), level, rng)?;
            Ok(LevelPlan::Antithetic {
                level,
                weight,
                draws,
            })
        }
        EstimatorForm::Truncated => {
            let members = match problem.inner_family(v) {
                InnerFamily::Finite(m) if m > 0 => m,
                InnerFamily::Finite(_) => {
                    return Err(Error::InvalidData(format!(
                        "component {v} has an empty inner family"
                    )))
                }
                InnerFamily::Stochastic => {
                    return Err(Error::NotEnumerable("the truncated estimator"))
                }
            };
            let n1 = members.ilog2();
            if n0 >= n1 {
                return Ok(LevelPlan::Exact { members });
            }
            let level = sample_truncated_level(config, n1, rng)?;
            let support = (n1 - n0 + 1) as i32;
            let weight = (1.0 - p.powi(support)) / ((1.0 - p) * p.powi(level as i32));
            if level == n1 - n0 {
                let draws = sample_draws(problem, v, n1, level, rng)?;
                Ok(LevelPlan::Top {
                    level,
                    weight,
                    draws,
                    members,
                })
            } else {
                let draws = sample_draws(problem, v, level + n0 + 1, level, rng)?;
                Ok(LevelPlan::Antithetic {
                    level,
                    weight,
                    draws,
                })
            }
        }
    }
}

/// `Y1 - ½(Y2 + Y3)`: full-batch estimate minus the mean of the two half-batch estimates.
pub fn level_estimator_value<P: CompositionProblem + ?Sized>(
    problem: &P,
    v: usize,
    stats_full: &InnerBatchStats,
    stats_first_half: &InnerBatchStats,
    stats_second_half: &InnerBatchStats,
) -> Result<DVector<f64>> {
    if stats_first_half.count != stats_second_half.count
        || stats_full.count != stats_first_half.count + stats_second_half.count
    {
        return Err(Error::MismatchedCounts(format!(
            "full batch of {} draws is not the union of halves of {} and {}",
            stats_full.count, stats_first_half.count, stats_second_half.count
        )));
    }
    let y1 = stats_full.chain_gradient(problem, v);
    let y2 = stats_first_half.chain_gradient(problem, v);
    let y3 = stats_second_half.chain_gradient(problem, v);
    Ok(y1 - (y2 + y3) * 0.5)
}

/// Base-level statistics over the first `base` draws, then the same running mean
/// continued over `draws[base..]`.
fn prefix_stats<P: CompositionProblem + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
    draws: &[P::InnerDraw],
    base: usize,
) -> (InnerBatchStats, InnerBatchStats) {
    let base_stats = InnerBatchStats::from_draws(problem, v, x, &draws[..base]);
    let mut rest = base_stats.clone();
    for w in &draws[base..] {
        rest.push(problem, v, w, x);
    }
    (base_stats, rest)
}

impl<W: Clone + Send + Sync> LevelPlan<W> {
    /// The multilevel correction `Y1 - ½(Y2 + Y3)` (or `Y1 - Y2` at the top), before reweighting.
    pub fn correction<P>(
        &self,
        problem: &P,
        v: usize,
        n0: u32,
        x: &DVector<f64>,
    ) -> Result<Option<DVector<f64>>>
    where
        P: CompositionProblem<InnerDraw = W> + ?Sized,
    {
        Ok(self.evaluate_parts(problem, v, n0, x)?.1)
    }

    fn evaluate_parts<P>(
        &self,
        problem: &P,
        v: usize,
        n0: u32,
        x: &DVector<f64>,
    ) -> Result<(DVector<f64>, Option<DVector<f64>>)>
    where
        P: CompositionProblem<InnerDraw = W> + ?Sized,
    {
        let base = 1usize << n0;
        match self {
            LevelPlan::Exact { .. } => Ok((
                exact_inner_stats(problem, v, x)?.chain_gradient(problem, v),
                None,
            )),
            LevelPlan::Antithetic { draws, .. } => {
                let half = draws.len() / 2;
                let (base_stats, first) = prefix_stats(problem, v, x, &draws[..half], base);
                let second = InnerBatchStats::from_draws(problem, v, x, &draws[half..]);
                let full = first.merge(&second)?;
                let correction = level_estimator_value(problem, v, &full, &first, &second)?;
                Ok((base_stats.chain_gradient(problem, v), Some(correction)))
            }
            LevelPlan::Top { draws, .. } => {
                let (base_stats, sub) = prefix_stats(problem, v, x, draws, base);
                let exact = exact_inner_stats(problem, v, x)?;
                let correction = exact.chain_gradient(problem, v) - sub.chain_gradient(problem, v);
                Ok((base_stats.chain_gradient(problem, v), Some(correction)))
            }
        }
    }

    /// `W(x, v)`: reweighted correction plus base-level estimate plus `∇h_v(x)`.
    pub fn evaluate<P>(
        &self,
        problem: &P,
        v: usize,
        n0: u32,
        x: &DVector<f64>,
    ) -> Result<GradientSample>
    where
        P: CompositionProblem<InnerDraw = W> + ?Sized,
    {
        let (mut grad, correction) = self.evaluate_parts(problem, v, n0, x)?;
        if let Some(c) = correction {
            let weight = match self {
                LevelPlan::Antithetic { weight, .. } | LevelPlan::Top { weight, .. } => *weight,
                LevelPlan::Exact { .. } => unreachable!(),
            };
            grad += c * weight;
        }
        add_direct_grad(problem, v, x, &mut grad);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                level: self.level(),
                component: v,
            });
        }
        Ok(GradientSample {
            grad,
            level: self.level(),
            inner_draws: self.inner_draws(),
            component: v,
        })
    }
}

/// Dispatches on [`EstimatorConfig::form`].
pub fn simulate_gradient<P: CompositionProblem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
    config: &EstimatorConfig,
    rng: &mut R,
) -> Result<GradientSample> {
    check_point(problem, x)?;
    let plan = draw_level_plan(problem, v, config, rng)?;
    plan.evaluate(problem, v, config.n0(), x)
}

/// Untruncated estimator: `W = (Y1 - ½(Y2+Y3)) / ((1-p) p^N) + Y4`.
pub fn unbiased_gradient<P: CompositionProblem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
    config: &EstimatorConfig,
    rng: &mut R,
) -> Result<GradientSample> {
    simulate_gradient(
        problem,
        v,
        x,
        &config.with_form(EstimatorForm::Geometric),
        rng,
    )
}

/// Finite-sum estimator with the level truncated at `⌊log2 m_v⌋ - n0`.
pub fn unbiased_gradient_finite<P: CompositionProblem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
    config: &EstimatorConfig,
    rng: &mut R,
) -> Result<GradientSample> {
    simulate_gradient(
        problem,
        v,
        x,
        &config.with_form(EstimatorForm::Truncated),
        rng,
    )
}

/// `W(x, v)` and `W(x_ref, v)` built from one level and one set of inner draws.
pub fn coupled_gradient_pair<P: CompositionProblem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
    x_ref: &DVector<f64>,
    config: &EstimatorConfig,
    rng: &mut R,
) -> Result<(GradientSample, GradientSample)> {
    check_point(problem, x)?;
    check_point(problem, x_ref)?;
    let plan = draw_level_plan(problem, v, config, rng)?;
    let at_x = plan.evaluate(problem, v, config.n0(), x)?;
    let at_ref = plan.evaluate(problem, v, config.n0(), x_ref)?;
    Ok((at_x, at_ref))
}

/// `W(x, v) - W(x_ref, v) + ref_grad` for a coupled pair.
///
/// The returned sample's `inner_draws` counts the shared draws once; evaluating
/// them at both points costs twice that.
pub fn variance_reduced_gradient<P: CompositionProblem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
    x_ref: &DVector<f64>,
    ref_grad: &DVector<f64>,
    config: &EstimatorConfig,
    rng: &mut R,
) -> Result<GradientSample> {
    if ref_grad.len() != problem.dimension() {
        return Err(Error::DimensionMismatch {
            expected: problem.dimension(),
            got: ref_grad.len(),
        });
    }
    let (at_x, at_ref) = coupled_gradient_pair(problem, v, x, x_ref, config, rng)?;
    Ok(GradientSample {
        grad: at_x.grad - at_ref.grad + ref_grad,
        ..at_ref
    })
}
