use rand::Rng;
use simgrad_core::problem::{InnerFamily, OuterFamily};
use simgrad_core::problems::{generate_cox_data, CoxDataset, CoxProblem, SyntheticComposition};
use simgrad_core::{CompositionProblem, DMatrix, DVector};

use crate::config::ProblemSpec;
use crate::BenchError;

/// A built problem; both families draw inner members by index.
#[derive(Clone, Debug)]
pub enum Instance {
    Synthetic(SyntheticComposition),
    Cox(CoxProblem),
}

impl Instance {
    pub fn build(spec: &ProblemSpec) -> Result<Self, BenchError> {
        let config = |e: simgrad_core::Error| BenchError::Config(e.to_string());
        Ok(match spec {
            ProblemSpec::Synthetic {
                n,
                m,
                d,
                p,
                seed,
                nonlinear,
            } => Instance::Synthetic(
                SyntheticComposition::generate(*n, *m, *d, *p, *seed, *nonlinear)
                    .map_err(config)?,
            ),
            ProblemSpec::Cox {
                n,
                p,
                censoring,
                seed,
            } => Instance::Cox(
                CoxProblem::new(generate_cox_data(*n, *p, *censoring, *seed).map_err(config)?)
                    .map_err(config)?,
            ),
            ProblemSpec::CoxCsv { path } => {
                let file = std::fs::File::open(path).map_err(|e| {
                    BenchError::Config(format!("cannot open {}: {e}", path.display()))
                })?;
                let data = CoxDataset::read_csv(std::io::BufReader::new(file))
                    .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
                Instance::Cox(CoxProblem::new(data).map_err(config)?)
            }
        })
    }

    /// Constant separating the reported objective from the textbook Cox objective.
    pub fn objective_offset(&self) -> f64 {
        match self {
            Instance::Synthetic(_) => 0.0,
            Instance::Cox(c) => c.objective_offset(),
        }
    }
}

macro_rules! delegate {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            Instance::Synthetic($p) => $e,
            Instance::Cox($p) => $e,
        }
    };
}

impl CompositionProblem for Instance {
    type InnerDraw = usize;

    fn dimension(&self) -> usize {
        delegate!(self, p => p.dimension())
    }

    fn inner_dimension(&self) -> usize {
        delegate!(self, p => p.inner_dimension())
    }

    fn outer_family(&self) -> OuterFamily {
        delegate!(self, p => p.outer_family())
    }

    fn inner_family(&self, v: usize) -> InnerFamily {
        delegate!(self, p => p.inner_family(v))
    }

    fn sample_outer<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        delegate!(self, p => p.sample_outer(rng))
    }

    fn sample_inner<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> usize {
        delegate!(self, p => p.sample_inner(v, rng))
    }

    fn inner_member(&self, v: usize, j: usize) -> simgrad_core::Result<usize> {
        delegate!(self, p => p.inner_member(v, j))
    }

    fn eval_inner(&self, v: usize, w: &usize, x: &DVector<f64>) -> DVector<f64> {
        delegate!(self, p => p.eval_inner(v, w, x))
    }

    fn jac_inner(&self, v: usize, w: &usize, x: &DVector<f64>) -> DMatrix<f64> {
        delegate!(self, p => p.jac_inner(v, w, x))
    }

    fn accumulate_inner(
        &self,
        v: usize,
        w: &usize,
        x: &DVector<f64>,
        weight: f64,
        value_mean: &mut DVector<f64>,
        jac_mean: &mut DMatrix<f64>,
    ) {
        delegate!(self, p => p.accumulate_inner(v, w, x, weight, value_mean, jac_mean))
    }

    fn eval_outer(&self, v: usize, y: &DVector<f64>) -> f64 {
        delegate!(self, p => p.eval_outer(v, y))
    }

    fn grad_outer(&self, v: usize, y: &DVector<f64>) -> DVector<f64> {
        delegate!(self, p => p.grad_outer(v, y))
    }

    fn direct_term(&self, v: usize, x: &DVector<f64>) -> f64 {
        delegate!(self, p => p.direct_term(v, x))
    }

    fn direct_term_grad(&self, v: usize, x: &DVector<f64>) -> Option<DVector<f64>> {
        delegate!(self, p => p.direct_term_grad(v, x))
    }
}
