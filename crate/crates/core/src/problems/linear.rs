use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::problem::{CompositionProblem, InnerFamily, OuterFamily};

/// Replaces the outer functions of a problem with linear ones, `f_v(y) = c_vᵀ y`,
/// keeping its inner family. With a linear outer map every multilevel correction
/// vanishes identically.
#[derive(Clone, Debug)]
pub struct LinearOuter<P> {
    inner: P,
    weights: Vec<DVector<f64>>,
}

impl<P: CompositionProblem> LinearOuter<P> {
    /// One weight vector per outer component (or a single vector shared by all).
    pub fn new(inner: P, weights: Vec<DVector<f64>>) -> Result<Self> {
        let d = inner.inner_dimension();
        if weights.is_empty() {
            return Err(Error::InvalidData(
                "at least one weight vector is required".into(),
            ));
        }
        if let Some(w) = weights.iter().find(|w| w.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: w.len(),
            });
        }
        Ok(LinearOuter { inner, weights })
    }

    fn weight(&self, v: usize) -> &DVector<f64> {
        &self.weights[v % self.weights.len()]
    }
}

impl<P: CompositionProblem> CompositionProblem for LinearOuter<P> {
    type InnerDraw = P::InnerDraw;

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn inner_dimension(&self) -> usize {
        self.inner.inner_dimension()
    }

    fn outer_family(&self) -> OuterFamily {
        self.inner.outer_family()
    }

    fn inner_family(&self, v: usize) -> InnerFamily {
        self.inner.inner_family(v)
    }

    fn sample_outer<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.inner.sample_outer(rng)
    }

    fn sample_inner<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> Self::InnerDraw {
        self.inner.sample_inner(v, rng)
    }

    fn inner_member(&self, v: usize, j: usize) -> Result<Self::InnerDraw> {
        self.inner.inner_member(v, j)
    }

    fn eval_inner(&self, v: usize, w: &Self::InnerDraw, x: &DVector<f64>) -> DVector<f64> {
        self.inner.eval_inner(v, w, x)
    }

    fn jac_inner(&self, v: usize, w: &Self::InnerDraw, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.jac_inner(v, w, x)
    }

    fn accumulate_inner(
        &self,
        v: usize,
        w: &Self::InnerDraw,
        x: &DVector<f64>,
        weight: f64,
        value_mean: &mut DVector<f64>,
        jac_mean: &mut DMatrix<f64>,
    ) {
        self.inner
            .accumulate_inner(v, w, x, weight, value_mean, jac_mean)
    }

    fn eval_outer(&self, v: usize, y: &DVector<f64>) -> f64 {
        self.weight(v).dot(y)
    }

    fn grad_outer(&self, v: usize, _y: &DVector<f64>) -> DVector<f64> {
        self.weight(v).clone()
    }
}
