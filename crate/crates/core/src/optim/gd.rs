use nalgebra::DVector;

use super::trace::{Recorder, RunStatus, RunTrace};
use super::DEFAULT_DIVERGENCE_BOUND;
use crate::error::{Error, Result};
use crate::problem::{
    check_point, exact_full_cost, exact_full_gradient, exact_objective, CompositionProblem,
};

/// Fixed-step gradient descent on the exact full gradient; one record per iteration.
pub fn gradient_descent<P: CompositionProblem + ?Sized>(
    problem: &P,
    x0: &DVector<f64>,
    steps: usize,
    step_size: f64,
) -> Result<RunTrace> {
    check_point(problem, x0)?;
    if !(step_size >= 0.0 && step_size.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "step size must be nonnegative, got {step_size}"
        )));
    }
    let cost = exact_full_cost(problem)?;
    let mut rec = Recorder::new();
    rec.record(problem, 0, x0, None);
    let mut x = x0.clone();
    for k in 1..=steps {
        let g = exact_full_gradient(problem, &x)?;
        rec.inner_evals += cost;
        if g.iter().any(|c| !c.is_finite()) {
            return Ok(rec.finish(RunStatus::Overflow {
                epoch: k,
                message: "non-finite gradient".into(),
            }));
        }
        x.axpy(-step_size, &g, 1.0);
        rec.steps += 1;
        let norm = x.norm();
        if !(norm <= DEFAULT_DIVERGENCE_BOUND) {
            return Ok(rec.finish(RunStatus::Diverged { epoch: k, norm }));
        }
        rec.record(problem, k, &x, None);
    }
    Ok(rec.finish(RunStatus::Completed))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// High-precision minimizer used as the gap baseline.
///
/// Gradient descent starting at `initial_step`; the step is halved whenever a
/// step raises the objective beyond rounding noise, and never grown again.
pub fn reference_solve<P: CompositionProblem + ?Sized>(
    problem: &P,
    x0: &DVector<f64>,
    initial_step: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ReferenceSolution> {
    check_point(problem, x0)?;
    if !(initial_step > 0.0 && tolerance > 0.0) {
        return Err(Error::InvalidConfig(
            "reference step and tolerance must be positive".into(),
        ));
    }
    let mut step = initial_step;
    let mut x = x0.clone();
    let mut f = exact_objective(problem, &x)?;
    let mut g = exact_full_gradient(problem, &x)?;
    for it in 0..max_iterations {
        let grad_norm = g.norm();
        if grad_norm <= tolerance {
            return Ok(ReferenceSolution {
                x,
                objective: f,
                grad_norm,
                iterations: it,
            });
        }
        loop {
            let candidate = &x - &g * step;
            let fc = exact_objective(problem, &candidate)?;
            if fc.is_finite() && fc <= f + 1e-12 * f.abs().max(1.0) {
                x = candidate;
                f = fc;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return Err(Error::InvalidData(
                    "reference solve failed to make progress".into(),
                ));
            }
        }
        g = exact_full_gradient(problem, &x)?;
    }
    Err(Error::InvalidData(format!(
        "reference solve stopped at gradient norm {:e} after {max_iterations} iterations",
        g.norm()
    )))
}
