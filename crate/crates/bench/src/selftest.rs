//! Fast property checks behind `bench selftest`.

use rand::Rng;
use rand_distr::StandardNormal;
use simgrad_core::estimator::{
    draw_level_plan, level_pmf, sample_level, sample_truncated_level, truncated_level_pmf,
    unbiased_gradient, unbiased_gradient_finite, RunningMoments,
};
use simgrad_core::optim::{simulated_svrg, EpochOutput, SvrgConfig};
use simgrad_core::problem::{exact_component_gradient, exact_full_gradient, exact_objective};
use simgrad_core::problems::{generate_cox_data, CoxProblem, LinearOuter, SyntheticComposition};
use simgrad_core::{DMatrix, DVector, EstimatorConfig, RandomSource};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Pearson statistic of observed counts against a pmf on `0..`, pooling the
/// tail into one bin once the expected count drops below 5.
/// Returns `(statistic, critical value at significance alpha)`.
pub fn chi_square(counts: &[u64], pmf: impl Fn(u32) -> f64, alpha: f64) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let n = total as f64;
    let mut stat = 0.0;
    let mut bins = 0;
    let mut mass = 0.0;
    let mut k = 0usize;
    while k < counts.len() {
        let expected = n * pmf(k as u32);
        if expected < 5.0 {
            break;
        }
        stat += (counts[k] as f64 - expected).powi(2) / expected;
        mass += pmf(k as u32);
        bins += 1;
        k += 1;
    }
    let tail_expected = n * (1.0 - mass);
    if tail_expected > 1e-9 {
        let tail_observed: u64 = counts[k.min(counts.len())..].iter().sum();
        stat += (tail_observed as f64 - tail_expected).powi(2) / tail_expected;
        bins += 1;
    }
    let critical = ChiSquared::new((bins - 1).max(1) as f64)
        .unwrap()
        .inverse_cdf(1.0 - alpha);
    (stat, critical)
}

fn check(name: &'static str, run: impl FnOnce() -> Result<String, String>) -> CheckResult {
    match run() {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

fn core<T>(r: simgrad_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

pub fn run_selftest() -> Vec<CheckResult> {
    let est = EstimatorConfig::new(0, 1.5).expect("valid estimator");
    vec![
        check("cox wiring matches direct gradient", || {
            let prob = core(CoxProblem::new(core(generate_cox_data(150, 6, 0.3, 1))?))?;
            let mut rng = RandomSource::new(2).stream();
            let mut worst: f64 = 0.0;
            for _ in 0..5 {
                let beta = DVector::from_fn(6, |_, _| 0.4 * rng.sample::<f64, _>(StandardNormal));
                let wired = core(exact_full_gradient(&prob, &beta))?;
                worst = worst.max((wired - prob.cox_full_gradient(&beta)).amax());
            }
            if worst <= 1e-10 {
                Ok(format!("max diff {worst:e}"))
            } else {
                Err(format!("max diff {worst:e}"))
            }
        }),
        check("finite differences on warped synthetic", || {
            let prob = core(SyntheticComposition::generate(3, 5, 2, 3, 4, true))?;
            let x = DVector::from_vec(vec![0.3, -0.6, 0.9]);
            let g = core(exact_full_gradient(&prob, &x))?;
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for i in 0..3 {
                let mut up = x.clone();
                let mut down = x.clone();
                up[i] += h;
                down[i] -= h;
                let fd = (core(exact_objective(&prob, &up))?
                    - core(exact_objective(&prob, &down))?)
                    / (2.0 * h);
                worst = worst.max((fd - g[i]).abs() / g.amax().max(1.0));
            }
            if worst <= 1e-5 {
                Ok(format!("max relative error {worst:e}"))
            } else {
                Err(format!("max relative error {worst:e}"))
            }
        }),
        check("geometric level pmf (chi-square, 1e5 draws)", || {
            let mut rng = RandomSource::new(3).stream();
            let mut counts = vec![0u64; 64];
            for _ in 0..100_000 {
                counts[(sample_level(&est, &mut rng) as usize).min(63)] += 1;
            }
            let (stat, crit) = chi_square(&counts, |n| level_pmf(&est, n), 0.01);
            let detail = format!("statistic {stat:.3}, critical {crit:.3}");
            if stat <= crit {
                Ok(detail)
            } else {
                Err(detail)
            }
        }),
        check("truncated level pmf (chi-square, 1e5 draws)", || {
            let mut rng = RandomSource::new(4).stream();
            let mut counts = vec![0u64; 4];
            for _ in 0..100_000 {
                counts[core(sample_truncated_level(&est, 3, &mut rng))? as usize] += 1;
            }
            let (stat, crit) = chi_square(&counts, |n| truncated_level_pmf(&est, 3, n), 0.01);
            let detail = format!("statistic {stat:.3}, critical {crit:.3}");
            if stat <= crit {
                Ok(detail)
            } else {
                Err(detail)
            }
        }),
        check("linear outer leaves only the base level", || {
            let inner = core(SyntheticComposition::generate(2, 6, 2, 3, 5, true))?;
            let prob = core(LinearOuter::new(
                inner,
                vec![DVector::from_vec(vec![1.0, -2.0]); 2],
            ))?;
            let x = DVector::from_vec(vec![0.5, 0.5, -1.0]);
            let mut rng = RandomSource::new(5).stream();
            let mut worst: f64 = 0.0;
            for _ in 0..2000 {
                let plan = core(draw_level_plan(&prob, 0, &est, &mut rng))?;
                if let Some(c) = core(plan.correction(&prob, 0, est.n0(), &x))? {
                    worst = worst.max(c.norm());
                }
            }
            if worst <= 1e-12 {
                Ok(format!("largest correction {worst:e}"))
            } else {
                Err(format!("largest correction {worst:e}"))
            }
        }),
        check("deterministic inner gives the exact gradient", || {
            let prob = core(SyntheticComposition::generate(3, 1, 2, 2, 6, true))?;
            let x = DVector::from_vec(vec![0.2, -0.4]);
            let mut rng = RandomSource::new(6).stream();
            let exact = core(exact_component_gradient(&prob, 1, &x))?;
            for _ in 0..200 {
                let s = core(unbiased_gradient(&prob, 1, &x, &est, &mut rng))?;
                if (s.grad - &exact).amax() > 1e-12 {
                    return Err("estimate differs from the exact gradient".into());
                }
            }
            Ok("200 draws exact".into())
        }),
        check("unbiased on synthetic (2e4 draws, 4 SE)", || {
            let prob = core(SyntheticComposition::generate(4, 8, 2, 3, 7, true))?;
            let x = DVector::from_vec(vec![0.4, 0.1, -0.3]);
            let exact = core(exact_component_gradient(&prob, 2, &x))?;
            let mut rng = RandomSource::new(7).stream();
            let mut geo = RunningMoments::new(3);
            let mut fin = RunningMoments::new(3);
            for _ in 0..20_000 {
                geo.push(&core(unbiased_gradient(&prob, 2, &x, &est, &mut rng))?.grad);
                fin.push(&core(unbiased_gradient_finite(&prob, 2, &x, &est, &mut rng))?.grad);
            }
            let mut worst: f64 = 0.0;
            for m in [&geo, &fin] {
                let z = (m.mean() - &exact).component_div(&m.standard_error());
                worst = worst.max(z.amax());
            }
            if worst <= 4.0 {
                Ok(format!("largest |z| {worst:.2}"))
            } else {
                Err(format!("largest |z| {worst:.2}"))
            }
        }),
        check("svrg contracts on a deterministic quadratic", || {
            let prob = core(SyntheticComposition::from_parts(
                vec![DVector::from_element(1, 1.0)],
                vec![(DMatrix::identity(1, 1), DVector::zeros(1))],
                false,
            ))?;
            let cfg = core(SvrgConfig::new(3, 10, 0.1, est))?.with_epoch_output(EpochOutput::Last);
            let trace = core(simulated_svrg(
                &prob,
                &DVector::from_element(1, 3.0),
                &cfg,
                &RandomSource::new(8),
            ))?;
            let err = (trace.final_iterate().unwrap()[0] - 1.0).abs();
            let bound = 0.9f64.powi(30) * 2.0 + 1e-12;
            if err <= bound {
                Ok(format!("final error {err:e}"))
            } else {
                Err(format!("final error {err:e} above {bound:e}"))
            }
        }),
        check("seeded runs are reproducible", || {
            let prob = core(SyntheticComposition::generate(4, 8, 2, 3, 7, false))?;
            let cfg = core(SvrgConfig::new(3, 20, 0.1, est))?;
            let x0 = DVector::from_element(3, 1.0);
            let a = core(simulated_svrg(&prob, &x0, &cfg, &RandomSource::new(9)))?;
            let b = core(simulated_svrg(&prob, &x0, &cfg, &RandomSource::new(9)))?;
            let same = a
                .records
                .iter()
                .zip(&b.records)
                .all(|(r, s)| r.iterate == s.iterate && r.inner_evals == s.inner_evals);
            if same && a.records.len() == b.records.len() {
                Ok("identical traces".into())
            } else {
                Err("traces differ".into())
            }
        }),
    ]
}
