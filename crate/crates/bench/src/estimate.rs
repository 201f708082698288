use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use simgrad_core::estimator::{estimator_diagnostics, expected_inner_draws};
use simgrad_core::problem::{check_component, exact_component_gradient};
use simgrad_core::{CompositionProblem, EstimatorConfig, RandomSource};

use crate::config::{BenchConfig, EstimatorSpec};
use crate::instance::Instance;
use crate::output::{fmt_f64, ESTIMATE_COLUMNS};
use crate::run::starting_point;
use crate::BenchError;

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRow {
    pub n0: u32,
    pub gamma: f64,
    pub draws: u64,
    pub bias_norm: f64,
    pub cov_trace: f64,
    pub mean_cost: f64,
    pub predicted_cost: f64,
    /// `level:count` pairs joined by `;`.
    pub level_histogram: String,
}

impl EstimateRow {
    fn record(&self) -> [String; 8] {
        [
            self.n0.to_string(),
            fmt_f64(self.gamma),
            self.draws.to_string(),
            fmt_f64(self.bias_norm),
            fmt_f64(self.cov_trace),
            fmt_f64(self.mean_cost),
            fmt_f64(self.predicted_cost),
            self.level_histogram.clone(),
        ]
    }
}

/// One diagnostics row per `(n0, gamma)` at the configured component and point.
pub fn estimate_rows(config: &BenchConfig) -> Result<Vec<EstimateRow>, BenchError> {
    let problem = Instance::build(&config.problem)?;
    let spec = &config.estimate;
    let v = spec.component;
    check_component(&problem, v).map_err(|e| BenchError::Config(e.to_string()))?;
    let x = starting_point(spec.point.as_ref(), problem.dimension(), "estimate.point")?;
    let exact = exact_component_gradient(&problem, v, &x)?;
    let rnd = RandomSource::new(spec.seed);

    let mut rows = Vec::new();
    for (i, &n0) in spec.n0s.iter().enumerate() {
        for (j, &gamma) in spec.gammas.iter().enumerate() {
            let est: EstimatorConfig = EstimatorSpec {
                n0,
                gamma,
                form: config.estimator.form,
            }
            .build()?;
            let mut rng = rnd.substream(i as u64, j as u64, 2);
            let d = estimator_diagnostics(&problem, v, &x, &est, spec.draws, &mut rng)?;
            let level_histogram = d
                .level_histogram
                .iter()
                .map(|(l, c)| format!("{l}:{c}"))
                .collect::<Vec<_>>()
                .join(";");
            rows.push(EstimateRow {
                n0,
                gamma,
                draws: d.draws,
                bias_norm: (&d.mean - &exact).norm(),
                cov_trace: d.cov_trace,
                mean_cost: d.mean_cost,
                predicted_cost: expected_inner_draws(&est),
                level_histogram,
            });
        }
    }
    Ok(rows)
}

/// Writes `estimate.csv` into `out_dir` and returns the rows.
pub fn cmd_estimate(config: &BenchConfig, out_dir: &Path) -> Result<Vec<EstimateRow>, BenchError> {
    let rows = estimate_rows(config)?;
    fs::create_dir_all(out_dir)?;
    let mut w =
        csv::Writer::from_writer(BufWriter::new(File::create(out_dir.join("estimate.csv"))?));
    w.write_record(ESTIMATE_COLUMNS)?;
    for r in &rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    let summary = serde_json::json!({ "config_hash": config.hash(), "seed": config.estimate.seed });
    fs::write(
        out_dir.join("estimate_summary.json"),
        format!("{summary:#}\n"),
    )?;
    Ok(rows)
}
