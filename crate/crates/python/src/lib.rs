//! Python bindings: problems, the simulated gradient estimators and the optimizers.

use std::fs::File;
use std::io::BufReader;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use simgrad_core::estimator::{
    estimator_diagnostics, expected_inner_draws, level_pmf, simulate_gradient,
    variance_reduced_gradient,
};
use simgrad_core::optim::{
    gradient_descent, reference_solve, simulated_scsg, simulated_sgd, simulated_svrg, EpochOutput,
    RunStatus, RunTrace, ScsgConfig, StepSchedule, SvrgConfig,
};
use simgrad_core::problem::{exact_component_gradient, exact_full_gradient, exact_objective};
use simgrad_core::problems::{generate_cox_data, CoxDataset, CoxProblem, SyntheticComposition};
use simgrad_core::{
    CompositionProblem, DVector, Error, EstimatorConfig, EstimatorForm, RandomSource,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NonFinite { .. } | Error::LevelTooDeep { .. } => {
            PyArithmeticError::new_err(e.to_string())
        }
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn vector(x: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(x)
}

fn list(x: &DVector<f64>) -> Vec<f64> {
    x.iter().copied().collect()
}

/// Level distribution and form of the simulated gradient.
#[pyclass(name = "Estimator", frozen, from_py_object)]
#[derive(Clone)]
struct PyEstimator {
    inner: EstimatorConfig,
}

#[pymethods]
impl PyEstimator {
    #[new]
    #[pyo3(signature = (n0 = 0, gamma = 1.5, form = "geometric"))]
    fn new(n0: u32, gamma: f64, form: &str) -> PyResult<Self> {
        let form = match form {
            "geometric" => EstimatorForm::Geometric,
            "truncated" => EstimatorForm::Truncated,
            other => return Err(PyValueError::new_err(format!("unknown form {other:?}"))),
        };
        let inner = EstimatorConfig::new(n0, gamma)
            .map_err(py_err)?
            .with_form(form);
        Ok(Self { inner })
    }

    #[getter]
    fn n0(&self) -> u32 {
        self.inner.n0()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn form(&self) -> &'static str {
        match self.inner.form() {
            EstimatorForm::Geometric => "geometric",
            EstimatorForm::Truncated => "truncated",
        }
    }

    /// Probability of level `n`.
    fn level_pmf(&self, n: u32) -> f64 {
        level_pmf(&self.inner, n)
    }

    /// Mean inner draws per estimate for the untruncated form.
    fn expected_inner_draws(&self) -> f64 {
        expected_inner_draws(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Estimator(n0={}, gamma={}, form={:?})",
            self.n0(),
            self.gamma(),
            self.form()
        )
    }
}

enum Kind {
    Synthetic(SyntheticComposition),
    Cox(CoxProblem),
}

macro_rules! with_problem {
    ($kind:expr, $p:ident => $body:expr) => {
        match $kind {
            Kind::Synthetic($p) => $body,
            Kind::Cox($p) => $body,
        }
    };
}

fn trace_dict<'py>(
    py: Python<'py>,
    trace: &RunTrace,
    f_star: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let r = &trace.records;
    d.set_item("epoch", r.iter().map(|e| e.epoch).collect::<Vec<_>>())?;
    d.set_item("steps", r.iter().map(|e| e.steps).collect::<Vec<_>>())?;
    d.set_item(
        "inner_evals",
        r.iter().map(|e| e.inner_evals).collect::<Vec<_>>(),
    )?;
    d.set_item(
        "objective",
        r.iter().map(|e| e.objective).collect::<Vec<_>>(),
    )?;
    if let Some(f) = f_star {
        d.set_item("gap", trace.gaps(f))?;
    }
    d.set_item("x", trace.final_iterate().map(list))?;
    let status = match &trace.status {
        RunStatus::Completed => "completed".to_string(),
        RunStatus::Diverged { epoch, .. } => format!("diverged at epoch {epoch}"),
        RunStatus::Overflow { epoch, message } => format!("overflow at epoch {epoch}: {message}"),
    };
    d.set_item("status", status)?;
    Ok(d)
}

/// A composition problem with exact oracles.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    kind: Kind,
}

impl PyProblem {
    fn point(&self, x: Vec<f64>) -> PyResult<DVector<f64>> {
        let p = self.dimension();
        if x.len() != p {
            return Err(PyValueError::new_err(format!(
                "expected a point of length {p}, got {}",
                x.len()
            )));
        }
        Ok(vector(x))
    }

    fn start(&self, x0: Option<Vec<f64>>) -> PyResult<DVector<f64>> {
        match x0 {
            Some(x) => self.point(x),
            None => Ok(DVector::zeros(self.dimension())),
        }
    }

    fn svrg_config(
        epochs: usize,
        inner_steps: usize,
        step_size: f64,
        estimator: &PyEstimator,
        output: &str,
    ) -> PyResult<SvrgConfig> {
        let output = match output {
            "random" => EpochOutput::RandomInner,
            "last" => EpochOutput::Last,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown epoch output {other:?}"
                )))
            }
        };
        Ok(
            SvrgConfig::new(epochs, inner_steps, step_size, estimator.inner)
                .map_err(py_err)?
                .with_epoch_output(output),
        )
    }
}

#[pymethods]
impl PyProblem {
    /// Finite-sum synthetic instance with `n` outer and `m` inner components.
    #[staticmethod]
    #[pyo3(signature = (n = 4, m = 8, d = 2, p = 3, seed = 7, nonlinear = false))]
    fn synthetic(
        n: usize,
        m: usize,
        d: usize,
        p: usize,
        seed: u64,
        nonlinear: bool,
    ) -> PyResult<Self> {
        let inner = SyntheticComposition::generate(n, m, d, p, seed, nonlinear).map_err(py_err)?;
        Ok(Self {
            kind: Kind::Synthetic(inner),
        })
    }

    /// Cox partial likelihood on simulated survival data.
    #[staticmethod]
    #[pyo3(signature = (n = 500, p = 20, censoring = 0.3, seed = 7))]
    fn cox(n: usize, p: usize, censoring: f64, seed: u64) -> PyResult<Self> {
        let data = generate_cox_data(n, p, censoring, seed).map_err(py_err)?;
        Ok(Self {
            kind: Kind::Cox(CoxProblem::new(data).map_err(py_err)?),
        })
    }

    /// Cox partial likelihood on a `y, delta, x1..xp` CSV file.
    #[staticmethod]
    fn cox_csv(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let data = CoxDataset::read_csv(BufReader::new(file)).map_err(py_err)?;
        Ok(Self {
            kind: Kind::Cox(CoxProblem::new(data).map_err(py_err)?),
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.kind {
            Kind::Synthetic(_) => "synthetic",
            Kind::Cox(_) => "cox",
        }
    }

    #[getter]
    fn dimension(&self) -> usize {
        with_problem!(&self.kind, p => p.dimension())
    }

    /// Number of outer components.
    #[getter]
    fn components(&self) -> usize {
        match self.kind {
            Kind::Synthetic(ref p) => p.targets().len(),
            Kind::Cox(ref p) => p.event_indices().len(),
        }
    }

    /// Constant added to the composition objective to recover the negative log partial likelihood.
    #[getter]
    fn objective_offset(&self) -> f64 {
        match self.kind {
            Kind::Synthetic(_) => 0.0,
            Kind::Cox(ref p) => p.objective_offset(),
        }
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        let x = self.point(x)?;
        with_problem!(&self.kind, p => exact_objective(p, &x)).map_err(py_err)
    }

    /// Exact gradient of the full objective, or of component `v` when given.
    #[pyo3(signature = (x, v = None))]
    fn gradient(&self, x: Vec<f64>, v: Option<usize>) -> PyResult<Vec<f64>> {
        let x = self.point(x)?;
        let g = match v {
            Some(v) => with_problem!(&self.kind, p => exact_component_gradient(p, v, &x)),
            None => with_problem!(&self.kind, p => exact_full_gradient(p, &x)),
        };
        g.map(|g| list(&g)).map_err(py_err)
    }

    /// One simulated gradient. Returns `(gradient, component, level, inner_draws)`.
    #[pyo3(signature = (x, estimator, seed, v = None))]
    fn simulate_gradient(
        &self,
        x: Vec<f64>,
        estimator: &PyEstimator,
        seed: u64,
        v: Option<usize>,
    ) -> PyResult<(Vec<f64>, usize, u32, u64)> {
        let x = self.point(x)?;
        let mut rng = RandomSource::new(seed).stream();
        let s = with_problem!(&self.kind, p => {
            let v = v.unwrap_or_else(|| p.sample_outer(&mut rng));
            simulate_gradient(p, v, &x, &estimator.inner, &mut rng)
        })
        .map_err(py_err)?;
        Ok((list(&s.grad), s.component, s.level, s.inner_draws))
    }

    /// `W(x) - W(x_ref) + ref_grad` on one shared level and draw set, with `v` uniform.
    fn variance_reduced_gradient(
        &self,
        x: Vec<f64>,
        x_ref: Vec<f64>,
        ref_grad: Vec<f64>,
        estimator: &PyEstimator,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let x = self.point(x)?;
        let x_ref = self.point(x_ref)?;
        let ref_grad = self.point(ref_grad)?;
        let mut rng = RandomSource::new(seed).stream();
        let s = with_problem!(&self.kind, p => {
            let v = p.sample_outer(&mut rng);
            variance_reduced_gradient(p, v, &x, &x_ref, &ref_grad, &estimator.inner, &mut rng)
        })
        .map_err(py_err)?;
        Ok(list(&s.grad))
    }

    /// Mean, standard error, covariance trace and cost of `draws` estimates at component `v`.
    fn estimate<'py>(
        &self,
        py: Python<'py>,
        v: usize,
        x: Vec<f64>,
        estimator: &PyEstimator,
        draws: u64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let x = self.point(x)?;
        let mut rng = RandomSource::new(seed).stream();
        let r = with_problem!(&self.kind, p => estimator_diagnostics(p, v, &x, &estimator.inner, draws, &mut rng))
            .map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("draws", r.draws)?;
        d.set_item("mean", list(&r.mean))?;
        d.set_item("standard_error", list(&r.standard_error))?;
        d.set_item("cov_trace", r.cov_trace)?;
        d.set_item("mean_cost", r.mean_cost)?;
        d.set_item("level_histogram", r.level_histogram)?;
        Ok(d)
    }

    /// High-precision minimizer. Returns `(x, objective, grad_norm, iterations)`.
    #[pyo3(signature = (tolerance = 1e-10, max_iterations = 1_000_000, step = 1.0))]
    fn reference_solve(
        &self,
        tolerance: f64,
        max_iterations: usize,
        step: f64,
    ) -> PyResult<(Vec<f64>, f64, f64, usize)> {
        let x0 = DVector::zeros(self.dimension());
        let r = with_problem!(&self.kind, p => reference_solve(p, &x0, step, tolerance, max_iterations))
            .map_err(py_err)?;
        Ok((list(&r.x), r.objective, r.grad_norm, r.iterations))
    }

    #[pyo3(signature = (estimator, seed, epochs = 20, inner_steps = 30, step_size = 0.1, x0 = None, output = "random", f_star = None))]
    #[allow(clippy::too_many_arguments)]
    fn svrg<'py>(
        &self,
        py: Python<'py>,
        estimator: &PyEstimator,
        seed: u64,
        epochs: usize,
        inner_steps: usize,
        step_size: f64,
        x0: Option<Vec<f64>>,
        output: &str,
        f_star: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let x0 = self.start(x0)?;
        let cfg = Self::svrg_config(epochs, inner_steps, step_size, estimator, output)?;
        let trace =
            with_problem!(&self.kind, p => simulated_svrg(p, &x0, &cfg, &RandomSource::new(seed)))
                .map_err(py_err)?;
        trace_dict(py, &trace, f_star)
    }

    #[pyo3(signature = (estimator, seed, epochs = 20, inner_steps = 30, step_size = 0.1, batch_size = 2, replicates = 4, x0 = None, output = "random", f_star = None))]
    #[allow(clippy::too_many_arguments)]
    fn scsg<'py>(
        &self,
        py: Python<'py>,
        estimator: &PyEstimator,
        seed: u64,
        epochs: usize,
        inner_steps: usize,
        step_size: f64,
        batch_size: usize,
        replicates: usize,
        x0: Option<Vec<f64>>,
        output: &str,
        f_star: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let x0 = self.start(x0)?;
        let base = Self::svrg_config(epochs, inner_steps, step_size, estimator, output)?;
        let cfg = ScsgConfig::new(base, batch_size, replicates).map_err(py_err)?;
        let trace =
            with_problem!(&self.kind, p => simulated_scsg(p, &x0, &cfg, &RandomSource::new(seed)))
                .map_err(py_err)?;
        trace_dict(py, &trace, f_star)
    }

    /// SGD with step `scale / (t + offset)`, recording every `stride` steps.
    #[pyo3(signature = (estimator, seed, steps = 600, scale = 0.5, offset = 10.0, stride = 30, x0 = None, f_star = None))]
    #[allow(clippy::too_many_arguments)]
    fn sgd<'py>(
        &self,
        py: Python<'py>,
        estimator: &PyEstimator,
        seed: u64,
        steps: usize,
        scale: f64,
        offset: f64,
        stride: usize,
        x0: Option<Vec<f64>>,
        f_star: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let x0 = self.start(x0)?;
        let schedule = StepSchedule::InverseTime { scale, offset };
        let rnd = RandomSource::new(seed);
        let trace = with_problem!(&self.kind, p => simulated_sgd(p, &x0, steps, schedule, &estimator.inner, stride, &rnd))
            .map_err(py_err)?;
        trace_dict(py, &trace, f_star)
    }

    #[pyo3(signature = (steps = 20, step_size = 0.1, x0 = None, f_star = None))]
    fn gd<'py>(
        &self,
        py: Python<'py>,
        steps: usize,
        step_size: f64,
        x0: Option<Vec<f64>>,
        f_star: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let x0 = self.start(x0)?;
        let trace = with_problem!(&self.kind, p => gradient_descent(p, &x0, steps, step_size))
            .map_err(py_err)?;
        trace_dict(py, &trace, f_star)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(kind={:?}, dimension={}, components={})",
            self.kind(),
            self.dimension(),
            self.components()
        )
    }
}

#[pymodule]
fn simgrad(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEstimator>()?;
    m.add_class::<PyProblem>()?;
    Ok(())
}
