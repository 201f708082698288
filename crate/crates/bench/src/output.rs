use std::io::Write;

use simgrad_core::optim::RunTrace;

use crate::BenchError;

pub const TRACE_COLUMNS: [&str; 6] = [
    "epoch",
    "steps",
    "inner_evals",
    "objective",
    "log10_gap",
    "elapsed_ms",
];

pub const ESTIMATE_COLUMNS: [&str; 8] = [
    "n0",
    "gamma",
    "draws",
    "bias_norm",
    "cov_trace",
    "mean_cost",
    "predicted_cost",
    "level_histogram",
];

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Gaps this many ulps of `|F*|` or smaller are rounding noise and reported as zero.
pub const GAP_RESOLUTION_ULPS: f64 = 4.0;

/// `log10(F - F*)`; `-inf` once the gap is within rounding resolution of zero.
pub fn log10_gap(objective: f64, f_star: f64) -> f64 {
    let gap = objective - f_star;
    let resolution = GAP_RESOLUTION_ULPS * f64::EPSILON * f_star.abs();
    if gap > resolution {
        gap.log10()
    } else if gap.is_nan() {
        f64::NAN
    } else {
        f64::NEG_INFINITY
    }
}

pub fn write_trace<W: Write>(
    out: W,
    trace: &RunTrace,
    f_star: f64,
    wall_clock: bool,
) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in &trace.records {
        let (objective, gap) = match r.objective {
            Some(f) => (fmt_f64(f), fmt_f64(log10_gap(f, f_star))),
            None => (String::new(), String::new()),
        };
        let elapsed = if wall_clock { r.elapsed.as_millis() } else { 0 };
        w.write_record([
            r.epoch.to_string(),
            r.steps.to_string(),
            r.inner_evals.to_string(),
            objective,
            gap,
            elapsed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
