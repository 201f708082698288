//! The composition-problem abstraction and its exact (enumeration) oracles.
//!
//! A problem describes `F(x) = E_v [ f_v(E_w g_w(x)) + h_v(x) ]` where `g_w` maps
//! `R^p -> R^d`, `f_v` maps `R^d -> R` and `h_v` is an optional additive term that
//! is differentiated directly instead of being routed through the composition.
//!
//! Jacobians are `d x p`: row index is the inner output coordinate, column index
//! is the coordinate of `x`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Distribution of the outer index `v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OuterFamily {
    /// `v` uniform on `0..n`.
    Finite(usize),
    /// `v` drawn by [`CompositionProblem::sample_outer`]; no enumeration possible.
    Stochastic,
}

/// Distribution of the inner draw `w` for a fixed `v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerFamily {
    /// `w` uniform on `m` enumerable members.
    Finite(usize),
    /// `w` drawn by [`CompositionProblem::sample_inner`].
    Stochastic,
}

pub trait CompositionProblem: Send + Sync {
    /// Whatever identifies one inner function `g_w`.
    type InnerDraw: Clone + Send + Sync;

    /// Dimension `p` of the decision variable.
    fn dimension(&self) -> usize;

    /// Codomain dimension `d` of the inner map.
    fn inner_dimension(&self) -> usize;

    fn outer_family(&self) -> OuterFamily;

    fn inner_family(&self, v: usize) -> InnerFamily;

    /// Draws an outer index. Problems with a stochastic outer family must override this.
    fn sample_outer<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self.outer_family() {
            OuterFamily::Finite(n) => rng.random_range(0..n),
            OuterFamily::Stochastic => {
                unimplemented!("stochastic outer families must override sample_outer")
            }
        }
    }

    /// Draws one inner member for component `v` from its distribution.
    fn sample_inner<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> Self::InnerDraw;

    /// Member `j` of a finite inner family.
    fn inner_member(&self, v: usize, j: usize) -> Result<Self::InnerDraw>;

    /// `g_w(x)`.
    fn eval_inner(&self, v: usize, w: &Self::InnerDraw, x: &DVector<f64>) -> DVector<f64>;

    /// `∇g_w(x)`, a `d x p` matrix.
    fn jac_inner(&self, v: usize, w: &Self::InnerDraw, x: &DVector<f64>) -> DMatrix<f64>;

    /// Folds `g_w(x)` and `∇g_w(x)` into running means: `mean += weight * (sample - mean)`.
    ///
    /// Override to avoid the temporaries of the default implementation.
    fn accumulate_inner(
        &self,
        v: usize,
        w: &Self::InnerDraw,
        x: &DVector<f64>,
        weight: f64,
        value_mean: &mut DVector<f64>,
        jac_mean: &mut DMatrix<f64>,
    ) {
        let value = self.eval_inner(v, w, x);
        let jac = self.jac_inner(v, w, x);
        value_mean.zip_apply(&value, |m, s| *m += weight * (s - *m));
        jac_mean.zip_apply(&jac, |m, s| *m += weight * (s - *m));
    }

    /// `f_v(y)`.
    fn eval_outer(&self, v: usize, y: &DVector<f64>) -> f64;

    /// `∇f_v(y)`.
    fn grad_outer(&self, v: usize, y: &DVector<f64>) -> DVector<f64>;

    /// Additive term `h_v(x)`.
    fn direct_term(&self, _v: usize, _x: &DVector<f64>) -> f64 {
        0.0
    }

    /// `∇h_v(x)`, or `None` when the problem has no direct term.
    fn direct_term_grad(&self, _v: usize, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

/// Rejects indices outside a finite outer family.
pub fn check_component<P: CompositionProblem + ?Sized>(problem: &P, v: usize) -> Result<()> {
    match problem.outer_family() {
        OuterFamily::Finite(n) if v >= n => Err(Error::ComponentOutOfRange { index: v, size: n }),
        _ => Ok(()),
    }
}

pub fn check_point<P: CompositionProblem + ?Sized>(problem: &P, x: &DVector<f64>) -> Result<()> {
    if x.len() != problem.dimension() {
        return Err(Error::DimensionMismatch {
            expected: problem.dimension(),
            got: x.len(),
        });
    }
    if x.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidData(
            "point has non-finite coordinates".into(),
        ));
    }
    Ok(())
}

/// Sample means `T̄_n(x)` and `S̄_n(x)` over a batch of inner draws.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerBatchStats {
    pub s_bar: DMatrix<f64>,
    pub t_bar: DVector<f64>,
    pub count: usize,
}

impl InnerBatchStats {
    pub fn empty(d: usize, p: usize) -> Self {
        InnerBatchStats {
            s_bar: DMatrix::zeros(d, p),
            t_bar: DVector::zeros(d),
            count: 0,
        }
    }

    pub fn push<P: CompositionProblem + ?Sized>(
        &mut self,
        problem: &P,
        v: usize,
        w: &P::InnerDraw,
        x: &DVector<f64>,
    ) {
        self.count += 1;
        let weight = 1.0 / self.count as f64;
        problem.accumulate_inner(v, w, x, weight, &mut self.t_bar, &mut self.s_bar);
    }

    pub fn from_draws<P: CompositionProblem + ?Sized>(
        problem: &P,
        v: usize,
        x: &DVector<f64>,
        draws: &[P::InnerDraw],
    ) -> Self {
        let mut stats = Self::empty(problem.inner_dimension(), problem.dimension());
        for w in draws {
            stats.push(problem, v, w, x);
        }
        stats
    }

    /// Averages two equal-count batches into the statistics of their union.
    pub fn merge(&self, other: &InnerBatchStats) -> Result<InnerBatchStats> {
        if self.count != other.count || self.count == 0 {
            return Err(Error::MismatchedCounts(format!(
                "cannot merge batches of {} and {} draws",
                self.count, other.count
            )));
        }
        Ok(InnerBatchStats {
            s_bar: (&self.s_bar + &other.s_bar) * 0.5,
            t_bar: (&self.t_bar + &other.t_bar) * 0.5,
            count: self.count * 2,
        })
    }

    /// `S̄ᵀ ∇f_v(T̄)`.
    pub fn chain_gradient<P: CompositionProblem + ?Sized>(
        &self,
        problem: &P,
        v: usize,
    ) -> DVector<f64> {
        self.s_bar.tr_mul(&problem.grad_outer(v, &self.t_bar))
    }
}

fn finite_inner_size<P: CompositionProblem + ?Sized>(
    problem: &P,
    v: usize,
    what: &'static str,
) -> Result<usize> {
    match problem.inner_family(v) {
        InnerFamily::Finite(m) => Ok(m),
        InnerFamily::Stochastic => Err(Error::NotEnumerable(what)),
    }
}

fn finite_outer_size<P: CompositionProblem + ?Sized>(
    problem: &P,
    what: &'static str,
) -> Result<usize> {
    match problem.outer_family() {
        OuterFamily::Finite(n) => Ok(n),
        OuterFamily::Stochastic => Err(Error::NotEnumerable(what)),
    }
}

/// Exact inner statistics by enumerating every member of a finite inner family.
pub fn exact_inner_stats<P: CompositionProblem + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
) -> Result<InnerBatchStats> {
    check_component(problem, v)?;
    let m = finite_inner_size(problem, v, "exact inner mean")?;
    let mut stats = InnerBatchStats::empty(problem.inner_dimension(), problem.dimension());
    for j in 0..m {
        let w = problem.inner_member(v, j)?;
        stats.push(problem, v, &w, x);
    }
    Ok(stats)
}

/// `((1/m_v) Σ_j g_j(x), (1/m_v) Σ_j ∇g_j(x))`.
pub fn exact_inner_mean<P: CompositionProblem + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let stats = exact_inner_stats(problem, v, x)?;
    Ok((stats.t_bar, stats.s_bar))
}

pub(crate) fn add_direct_grad<P: CompositionProblem + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
    grad: &mut DVector<f64>,
) {
    if let Some(h) = problem.direct_term_grad(v, x) {
        *grad += h;
    }
}

/// Gradient of `f_v(E_w g_w(x)) + h_v(x)` for one outer component.
pub fn exact_component_gradient<P: CompositionProblem + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_point(problem, x)?;
    let stats = exact_inner_stats(problem, v, x)?;
    let mut grad = stats.chain_gradient(problem, v);
    add_direct_grad(problem, v, x, &mut grad);
    Ok(grad)
}

pub fn exact_component_objective<P: CompositionProblem + ?Sized>(
    problem: &P,
    v: usize,
    x: &DVector<f64>,
) -> Result<f64> {
    check_point(problem, x)?;
    let (mean, _) = exact_inner_mean(problem, v, x)?;
    Ok(problem.eval_outer(v, &mean) + problem.direct_term(v, x))
}

/// `∇F(x)`, averaging [`exact_component_gradient`] over every outer component.
pub fn exact_full_gradient<P: CompositionProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = finite_outer_size(problem, "exact full gradient")?;
    let mut total = DVector::zeros(problem.dimension());
    for v in 0..n {
        total += exact_component_gradient(problem, v, x)?;
    }
    Ok(total / n as f64)
}

/// `F(x)` by full enumeration.
pub fn exact_objective<P: CompositionProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
) -> Result<f64> {
    let n = finite_outer_size(problem, "exact objective")?;
    let mut total = 0.0;
    for v in 0..n {
        total += exact_component_objective(problem, v, x)?;
    }
    Ok(total / n as f64)
}

/// Inner evaluations consumed by one call to [`exact_full_gradient`].
pub fn exact_full_cost<P: CompositionProblem + ?Sized>(problem: &P) -> Result<u64> {
    let n = finite_outer_size(problem, "exact full cost")?;
    let mut cost = 0u64;
    for v in 0..n {
        cost += finite_inner_size(problem, v, "exact full cost")? as u64;
    }
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::SyntheticComposition;

    fn identity_problem(p: usize, a: Vec<f64>) -> SyntheticComposition {
        SyntheticComposition::from_parts(
            vec![DVector::from_vec(a)],
            vec![(DMatrix::identity(p, p), DVector::zeros(p))],
            false,
        )
        .unwrap()
    }

    #[test]
    fn identity_inner_mean() {
        let prob = identity_problem(3, vec![0.0; 3]);
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let (t, s) = exact_inner_mean(&prob, 0, &x).unwrap();
        assert_eq!(t, x);
        assert_eq!(s, DMatrix::identity(3, 3));
    }

    #[test]
    fn constant_family_mean_is_member() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.25]);
        let b = DVector::from_vec(vec![0.1, -0.7]);
        let prob = SyntheticComposition::from_parts(
            vec![DVector::zeros(2)],
            vec![(a.clone(), b.clone()); 5],
            false,
        )
        .unwrap();
        let x = DVector::from_vec(vec![1.5, -2.0]);
        let (t, s) = exact_inner_mean(&prob, 0, &x).unwrap();
        assert_eq!(t, &a * &x + &b);
        assert_eq!(s, a);
    }

    #[test]
    fn quadratic_gradient_and_objective() {
        let prob = identity_problem(2, vec![1.0, -2.0]);
        let x = DVector::from_vec(vec![0.5, 0.5]);
        let g = exact_full_gradient(&prob, &x).unwrap();
        assert_eq!(g, DVector::from_vec(vec![-0.5, 2.5]));
        let f = exact_objective(&prob, &x).unwrap();
        assert!((f - 0.5 * (0.25 + 6.25)).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_component_rejected() {
        let prob = identity_problem(2, vec![0.0, 0.0]);
        let x = DVector::zeros(2);
        assert!(matches!(
            exact_component_gradient(&prob, 3, &x),
            Err(Error::ComponentOutOfRange { index: 3, size: 1 })
        ));
        assert!(matches!(
            prob.inner_member(0, 1),
            Err(Error::InnerOutOfRange { .. })
        ));
    }

    #[test]
    fn wrong_dimension_rejected() {
        let prob = identity_problem(2, vec![0.0, 0.0]);
        assert!(matches!(
            exact_component_gradient(&prob, 0, &DVector::zeros(3)),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn merge_requires_equal_counts() {
        let a = InnerBatchStats {
            s_bar: DMatrix::zeros(1, 1),
            t_bar: DVector::zeros(1),
            count: 2,
        };
        let b = InnerBatchStats {
            count: 3,
            ..a.clone()
        };
        assert!(matches!(a.merge(&b), Err(Error::MismatchedCounts(_))));
    }
}
