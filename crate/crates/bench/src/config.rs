//! JSON benchmark configuration. Every field has a default, unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use simgrad_core::estimator::EstimatorForm;
use simgrad_core::optim::EpochOutput;
use simgrad_core::EstimatorConfig;

use crate::BenchError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub problem: ProblemSpec,
    pub estimator: EstimatorSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    pub run: RunSpec,
    pub estimate: EstimateSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Synthetic {
        #[serde(default = "defaults::synthetic_n")]
        n: usize,
        #[serde(default = "defaults::synthetic_m")]
        m: usize,
        #[serde(default = "defaults::synthetic_d")]
        d: usize,
        #[serde(default = "defaults::synthetic_p")]
        p: usize,
        #[serde(default = "defaults::problem_seed")]
        seed: u64,
        #[serde(default)]
        nonlinear: bool,
    },
    Cox {
        #[serde(default = "defaults::cox_n")]
        n: usize,
        #[serde(default = "defaults::cox_p")]
        p: usize,
        #[serde(default = "defaults::censoring")]
        censoring: f64,
        #[serde(default = "defaults::problem_seed")]
        seed: u64,
    },
    CoxCsv {
        path: PathBuf,
    },
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::Synthetic {
            n: defaults::synthetic_n(),
            m: defaults::synthetic_m(),
            d: defaults::synthetic_d(),
            p: defaults::synthetic_p(),
            seed: defaults::problem_seed(),
            nonlinear: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormSpec {
    #[default]
    Geometric,
    Truncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSpec {
    pub n0: u32,
    pub gamma: f64,
    pub form: FormSpec,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec {
            n0: 0,
            gamma: 1.5,
            form: FormSpec::Geometric,
        }
    }
}

impl EstimatorSpec {
    pub fn build(&self) -> Result<EstimatorConfig, BenchError> {
        let form = match self.form {
            FormSpec::Geometric => EstimatorForm::Geometric,
            FormSpec::Truncated => EstimatorForm::Truncated,
        };
        Ok(EstimatorConfig::new(self.n0, self.gamma)
            .map_err(|e| BenchError::Config(e.to_string()))?
            .with_form(form))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSpec {
    Last,
    #[default]
    RandomInner,
}

impl From<OutputSpec> for EpochOutput {
    fn from(o: OutputSpec) -> Self {
        match o {
            OutputSpec::Last => EpochOutput::Last,
            OutputSpec::RandomInner => EpochOutput::RandomInner,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant { step_size: f64 },
    InverseTime { scale: f64, offset: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Svrg {
        #[serde(default)]
        name: Option<String>,
        #[serde(default = "defaults::step_size")]
        step_size: f64,
        #[serde(default = "defaults::inner_steps")]
        inner_steps: usize,
        #[serde(default)]
        epoch_output: OutputSpec,
        #[serde(default)]
        estimator: Option<EstimatorSpec>,
    },
    Scsg {
        #[serde(default)]
        name: Option<String>,
        #[serde(default = "defaults::step_size")]
        step_size: f64,
        #[serde(default = "defaults::inner_steps")]
        inner_steps: usize,
        #[serde(default)]
        epoch_output: OutputSpec,
        #[serde(default = "defaults::batch_size")]
        batch_size: usize,
        #[serde(default = "defaults::replicates")]
        replicates: usize,
        #[serde(default)]
        estimator: Option<EstimatorSpec>,
    },
    Sgd {
        #[serde(default)]
        name: Option<String>,
        #[serde(default = "defaults::schedule")]
        schedule: ScheduleSpec,
        /// Steps between trace records; each record counts as one epoch.
        #[serde(default = "defaults::inner_steps")]
        steps_per_epoch: usize,
        #[serde(default)]
        estimator: Option<EstimatorSpec>,
    },
    Gd {
        #[serde(default)]
        name: Option<String>,
        #[serde(default = "defaults::step_size")]
        step_size: f64,
    },
}

impl Default for AlgorithmSpec {
    fn default() -> Self {
        AlgorithmSpec::Svrg {
            name: None,
            step_size: defaults::step_size(),
            inner_steps: defaults::inner_steps(),
            epoch_output: OutputSpec::default(),
            estimator: None,
        }
    }
}

impl AlgorithmSpec {
    pub fn name(&self) -> String {
        let (name, kind) = match self {
            AlgorithmSpec::Svrg { name, .. } => (name, "svrg"),
            AlgorithmSpec::Scsg { name, .. } => (name, "scsg"),
            AlgorithmSpec::Sgd { name, .. } => (name, "sgd"),
            AlgorithmSpec::Gd { name, .. } => (name, "gd"),
        };
        name.clone().unwrap_or_else(|| kind.to_string())
    }

    /// The algorithm's own estimator, falling back to the shared one.
    pub fn estimator<'a>(&'a self, shared: &'a EstimatorSpec) -> &'a EstimatorSpec {
        match self {
            AlgorithmSpec::Svrg { estimator, .. }
            | AlgorithmSpec::Scsg { estimator, .. }
            | AlgorithmSpec::Sgd { estimator, .. } => estimator.as_ref().unwrap_or(shared),
            AlgorithmSpec::Gd { .. } => shared,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub output_dir: PathBuf,
    pub reference_tol: f64,
    pub reference_max_iter: usize,
    /// Starting point; zeros when absent.
    pub x0: Option<Vec<f64>>,
    /// Record wall-clock time in `elapsed_ms`. Off by default so traces are byte-reproducible.
    pub wall_clock: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            seeds: vec![1, 2, 3, 4, 5],
            epochs: 20,
            output_dir: PathBuf::from("bench-out"),
            reference_tol: 1e-10,
            reference_max_iter: 1_000_000,
            x0: None,
            wall_clock: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSpec {
    pub draws: u64,
    pub n0s: Vec<u32>,
    pub gammas: Vec<f64>,
    pub component: usize,
    /// Evaluation point; zeros when absent.
    pub point: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for EstimateSpec {
    fn default() -> Self {
        EstimateSpec {
            draws: 100_000,
            n0s: vec![0, 2],
            gammas: vec![1.2, 1.5, 1.9],
            component: 0,
            point: None,
            seed: 0,
        }
    }
}

mod defaults {
    use super::ScheduleSpec;

    pub fn synthetic_n() -> usize {
        4
    }
    pub fn synthetic_m() -> usize {
        8
    }
    pub fn synthetic_d() -> usize {
        2
    }
    pub fn synthetic_p() -> usize {
        3
    }
    pub fn problem_seed() -> u64 {
        7
    }
    pub fn cox_n() -> usize {
        500
    }
    pub fn cox_p() -> usize {
        20
    }
    pub fn censoring() -> f64 {
        0.3
    }
    pub fn step_size() -> f64 {
        0.1
    }
    pub fn inner_steps() -> usize {
        30
    }
    pub fn batch_size() -> usize {
        2
    }
    pub fn replicates() -> usize {
        4
    }
    pub fn schedule() -> ScheduleSpec {
        ScheduleSpec::InverseTime {
            scale: 0.5,
            offset: 10.0,
        }
    }
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let mut config: BenchConfig =
            serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        if config.algorithms.is_empty() {
            config.algorithms.push(AlgorithmSpec::default());
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Structural checks that need no problem instance.
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        match &self.problem {
            ProblemSpec::Synthetic { n, m, d, p, .. }
                if *n == 0 || *m == 0 || *d == 0 || *p == 0 =>
            {
                return bad("synthetic dimensions must be positive".into())
            }
            ProblemSpec::Cox {
                n, p, censoring, ..
            } => {
                if *n == 0 || *p == 0 {
                    return bad("cox n and p must be positive".into());
                }
                if !(*censoring > 0.0 && *censoring < 1.0) {
                    return bad(format!("censoring must lie in (0, 1), got {censoring}"));
                }
            }
            _ => {}
        }
        self.estimator.build()?;
        let mut names = BTreeSet::new();
        for alg in &self.algorithms {
            alg.estimator(&self.estimator).build()?;
            let positive = |v: f64| v > 0.0 && v.is_finite();
            match alg {
                AlgorithmSpec::Svrg {
                    step_size,
                    inner_steps,
                    ..
                } if !positive(*step_size) || *inner_steps == 0 => {
                    return bad("svrg needs a positive step size and inner step count".into())
                }
                AlgorithmSpec::Scsg {
                    step_size,
                    inner_steps,
                    batch_size,
                    replicates,
                    ..
                } if !positive(*step_size)
                    || *inner_steps == 0
                    || *batch_size == 0
                    || *replicates == 0 =>
                {
                    return bad(
                        "scsg needs positive step size, inner steps, batch size and replicates"
                            .into(),
                    )
                }
                AlgorithmSpec::Sgd {
                    schedule,
                    steps_per_epoch,
                    ..
                } => {
                    let ok = match schedule {
                        ScheduleSpec::Constant { step_size } => {
                            *step_size >= 0.0 && step_size.is_finite()
                        }
                        ScheduleSpec::InverseTime { scale, offset } => {
                            positive(*scale) && *offset >= 0.0
                        }
                    };
                    if !ok || *steps_per_epoch == 0 {
                        return bad("sgd schedule or steps_per_epoch invalid".into());
                    }
                }
                AlgorithmSpec::Gd { step_size, .. }
                    if !(*step_size >= 0.0 && step_size.is_finite()) =>
                {
                    return bad("gd step size must be nonnegative".into())
                }
                _ => {}
            }
            let name = alg.name();
            if name.is_empty()
                || !name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return bad(format!(
                    "algorithm name {name:?} must be nonempty [A-Za-z0-9_-]"
                ));
            }
            if !names.insert(name.clone()) {
                return bad(format!(
                    "duplicate algorithm name {name:?}; set distinct `name` fields"
                ));
            }
        }
        if self.run.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.run.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.run.reference_tol > 0.0) {
            return bad("reference_tol must be positive".into());
        }
        if self.estimate.draws == 0 {
            return bad("estimate.draws must be at least 1".into());
        }
        for &g in &self.estimate.gammas {
            for &n0 in &self.estimate.n0s {
                EstimatorConfig::new(n0, g).map_err(|e| BenchError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, overrides and defaults included.
    /// The output directory is left out since it does not affect any result.
    pub fn hash(&self) -> String {
        let mut resolved = self.clone();
        resolved.run.output_dir = PathBuf::new();
        let canonical = serde_json::to_vec(&resolved).expect("config serializes");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
