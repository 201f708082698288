use rand::Rng;
use rand_distr::StandardNormal;
use simgrad_core::estimator::unbiased_gradient;
use simgrad_core::optim::{
    gradient_descent, reference_solve, scsg_anchor, simulated_scsg, simulated_sgd, simulated_svrg,
    EpochOutput, RunStatus, RunTrace, ScsgConfig, StepSchedule, SvrgConfig,
};
use simgrad_core::problem::{exact_full_gradient, exact_objective};
use simgrad_core::problems::{
    generate_cox_data, generate_cox_data_with, sample_event_times, CoxProblem, SyntheticComposition,
};
use simgrad_core::{DMatrix, DVector, EstimatorConfig, RandomSource};
use statrs::distribution::{ChiSquared, ContinuousCDF, Exp};

/// `F(x) = ½(x - 1)²` with a single deterministic inner map.
fn unit_quadratic() -> SyntheticComposition {
    SyntheticComposition::from_parts(
        vec![DVector::from_element(1, 1.0)],
        vec![(DMatrix::identity(1, 1), DVector::zeros(1))],
        false,
    )
    .unwrap()
}

fn synthetic() -> SyntheticComposition {
    SyntheticComposition::generate(4, 8, 2, 3, 7, false).unwrap()
}

fn est() -> EstimatorConfig {
    EstimatorConfig::new(0, 1.5).unwrap()
}

fn same_path(a: &RunTrace, b: &RunTrace) -> bool {
    a.status == b.status
        && a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|(r, s)| {
            r.iterate == s.iterate
                && r.objective == s.objective
                && r.steps == s.steps
                && r.inner_evals == s.inner_evals
        })
}

fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let num: f64 = ys
        .iter()
        .enumerate()
        .map(|(i, y)| (i as f64 - xm) * (y - ym))
        .sum();
    let den: f64 = (0..ys.len()).map(|i| (i as f64 - xm).powi(2)).sum();
    num / den
}

#[test]
fn svrg_contracts_on_deterministic_quadratic() {
    let prob = unit_quadratic();
    let x0 = DVector::from_element(1, 5.0);
    let cfg = SvrgConfig::new(6, 10, 0.1, est())
        .unwrap()
        .with_epoch_output(EpochOutput::Last);
    let trace = simulated_svrg(&prob, &x0, &cfg, &RandomSource::new(1)).unwrap();
    assert!(trace.is_completed());
    assert_eq!(trace.records.len(), 7);
    for r in &trace.records {
        let bound = 0.9f64.powi(10 * r.epoch as i32) * 4.0;
        assert!(
            (r.iterate[0] - 1.0).abs() <= bound + 1e-12,
            "epoch {}",
            r.epoch
        );
    }
}

#[test]
fn svrg_stays_at_optimum_with_deterministic_inner() {
    let prob = SyntheticComposition::generate(4, 1, 3, 3, 2, false).unwrap();
    let xs = prob.closed_form_minimizer().unwrap();
    let cfg = SvrgConfig::new(3, 20, 0.1, est()).unwrap();
    let trace = simulated_svrg(&prob, &xs, &cfg, &RandomSource::new(3)).unwrap();
    for r in &trace.records {
        assert!((&r.iterate - &xs).amax() <= 1e-6);
    }
}

#[test]
fn svrg_mean_drift_at_optimum_is_zero() {
    let prob = synthetic();
    let xs = prob.closed_form_minimizer().unwrap();
    let cfg = SvrgConfig::new(1, 10, 0.1, est())
        .unwrap()
        .with_epoch_output(EpochOutput::Last);
    let drifts: Vec<DVector<f64>> = (0..100)
        .map(|seed| {
            let t = simulated_svrg(&prob, &xs, &cfg, &RandomSource::new(seed)).unwrap();
            t.final_iterate().unwrap() - &xs
        })
        .collect();
    let mean = drifts.iter().fold(DVector::zeros(3), |a, d| a + d) / 100.0;
    for c in 0..3 {
        let var = drifts.iter().map(|d| (d[c] - mean[c]).powi(2)).sum::<f64>() / 99.0;
        let se = (var / 100.0).sqrt();
        assert!(
            mean[c].abs() <= 3.0 * se + 1e-12,
            "coordinate {c}: drift {} vs se {se}",
            mean[c]
        );
    }
}

#[test]
fn scsg_with_full_batch_matches_svrg() {
    let prob = SyntheticComposition::generate(4, 1, 2, 3, 4, true).unwrap();
    let x0 = DVector::from_vec(vec![1.0, -1.0, 0.5]);
    let base = SvrgConfig::new(4, 15, 0.1, est()).unwrap();
    let rnd = RandomSource::new(9);
    let svrg = simulated_svrg(&prob, &x0, &base, &rnd).unwrap();
    let scsg = simulated_scsg(&prob, &x0, &ScsgConfig::new(base, 4, 3).unwrap(), &rnd).unwrap();
    assert_eq!(svrg.records.len(), scsg.records.len());
    for (a, b) in svrg.records.iter().zip(&scsg.records) {
        assert!((&a.iterate - &b.iterate).amax() <= 1e-12);
        assert_eq!(a.output_index, b.output_index);
    }
}

#[test]
fn scsg_anchor_is_unbiased() {
    let prob = synthetic();
    let x = DVector::from_vec(vec![0.3, -0.2, 0.8]);
    let cfg = ScsgConfig::new(SvrgConfig::new(1, 1, 0.1, est()).unwrap(), 1, 1).unwrap();
    let rnd = RandomSource::new(17);
    let draws = 10_000;
    let mut sum = DVector::zeros(3);
    let mut sq = DVector::zeros(3);
    for s in 0..draws {
        let (h, cost) = scsg_anchor(&prob, &x, &cfg, s, &rnd).unwrap();
        assert!(cost >= 2);
        sq += h.component_mul(&h);
        sum += h;
    }
    let n = draws as f64;
    let mean = &sum / n;
    let exact = exact_full_gradient(&prob, &x).unwrap();
    for c in 0..3 {
        let var = (sq[c] - n * mean[c] * mean[c]) / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean[c] - exact[c]).abs() <= 3.0 * se, "coordinate {c}");
    }
}

#[test]
fn scsg_rejects_oversized_batch() {
    let prob = synthetic();
    let cfg = ScsgConfig::new(SvrgConfig::new(1, 1, 0.1, est()).unwrap(), 5, 1).unwrap();
    assert!(simulated_scsg(&prob, &DVector::zeros(3), &cfg, &RandomSource::new(0)).is_err());
}

#[test]
fn sgd_with_zero_step_is_constant() {
    let prob = synthetic();
    let x0 = DVector::from_vec(vec![0.4, 0.1, -0.7]);
    let trace = simulated_sgd(
        &prob,
        &x0,
        50,
        StepSchedule::Constant(0.0),
        &est(),
        10,
        &RandomSource::new(2),
    )
    .unwrap();
    assert_eq!(trace.records.len(), 6);
    assert!(trace.records.iter().all(|r| r.iterate == x0));
}

#[test]
fn sgd_matches_gradient_descent_on_deterministic_problem() {
    let prob = SyntheticComposition::generate(1, 1, 3, 3, 5, true).unwrap();
    let x0 = DVector::from_vec(vec![1.0, 2.0, -1.0]);
    let sgd = simulated_sgd(
        &prob,
        &x0,
        30,
        StepSchedule::Constant(0.1),
        &est(),
        1,
        &RandomSource::new(4),
    )
    .unwrap();
    let gd = gradient_descent(&prob, &x0, 30, 0.1).unwrap();
    assert_eq!(sgd.records.len(), gd.records.len());
    for (a, b) in sgd.records.iter().zip(&gd.records) {
        assert!((&a.iterate - &b.iterate).amax() <= 1e-14);
    }
}

#[test]
fn sgd_decreasing_steps_reduce_gap() {
    let prob = synthetic();
    let xs = prob.closed_form_minimizer().unwrap();
    let f_star = exact_objective(&prob, &xs).unwrap();
    let x0 = DVector::from_element(3, 1.0);
    let initial = exact_objective(&prob, &x0).unwrap() - f_star;
    let schedule = StepSchedule::InverseTime {
        scale: 0.5,
        offset: 10.0,
    };
    let finals: f64 = (0..10)
        .map(|seed| {
            let t = simulated_sgd(
                &prob,
                &x0,
                10_000,
                schedule,
                &est(),
                1000,
                &RandomSource::new(seed),
            )
            .unwrap();
            t.records.last().unwrap().objective.unwrap() - f_star
        })
        .sum::<f64>()
        / 10.0;
    assert!(
        finals <= initial * 1e-2,
        "mean final gap {finals:e} vs initial {initial:e}"
    );
}

#[test]
fn gradient_descent_unit_step_converges_in_one() {
    let prob = unit_quadratic();
    let trace = gradient_descent(&prob, &DVector::from_element(1, -3.0), 3, 1.0).unwrap();
    assert_eq!(trace.records[1].iterate[0], 1.0);
    assert_eq!(trace.records[1].objective, Some(0.0));
}

#[test]
fn gradient_descent_zero_step_is_constant() {
    let prob = synthetic();
    let x0 = DVector::from_vec(vec![1.0, 1.0, 1.0]);
    let trace = gradient_descent(&prob, &x0, 5, 0.0).unwrap();
    assert!(trace.records.iter().all(|r| r.iterate == x0));
    let counts: Vec<u64> = trace.records.iter().map(|r| r.inner_evals).collect();
    assert!(counts.windows(2).all(|w| w[1] == w[0] + 32));
}

#[test]
fn gradient_descent_log_gap_falls_linearly_on_quadratic() {
    let prob = unit_quadratic();
    let trace = gradient_descent(&prob, &DVector::from_element(1, 3.0), 10, 0.5).unwrap();
    let logs: Vec<f64> = trace.gaps(0.0).iter().map(|g| g.log10()).collect();
    let step = 2.0 * 0.5f64.log10();
    for w in logs.windows(2) {
        assert!((w[1] - w[0] - step).abs() < 1e-9);
    }
}

#[test]
fn reference_solve_matches_closed_form() {
    let prob = synthetic();
    let sol = reference_solve(&prob, &DVector::zeros(3), 0.5, 1e-10, 100_000).unwrap();
    assert!(sol.grad_norm <= 1e-10);
    let xs = prob.closed_form_minimizer().unwrap();
    assert!((sol.x - xs).amax() <= 1e-8);
}

#[test]
fn option_two_index_is_uniform() {
    let prob = unit_quadratic();
    let m = 10;
    let epochs = 100_000;
    let cfg = SvrgConfig::new(epochs, m, 1e-3, est()).unwrap();
    let trace = simulated_svrg(
        &prob,
        &DVector::from_element(1, 1.0),
        &cfg,
        &RandomSource::new(12),
    )
    .unwrap();
    let mut counts = vec![0f64; m];
    for r in trace.records.iter().skip(1) {
        counts[r.output_index.unwrap()] += 1.0;
    }
    let expected = epochs as f64 / m as f64;
    let stat: f64 = counts
        .iter()
        .map(|c| (c - expected).powi(2) / expected)
        .sum();
    let critical = ChiSquared::new((m - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(stat <= critical, "chi-square {stat} > {critical}");
}

#[test]
fn divergence_is_reported() {
    let prob = unit_quadratic();
    let cfg = SvrgConfig::new(50, 10, 5.0, est())
        .unwrap()
        .with_epoch_output(EpochOutput::Last);
    let trace = simulated_svrg(
        &prob,
        &DVector::from_element(1, 2.0),
        &cfg,
        &RandomSource::new(0),
    )
    .unwrap();
    assert!(matches!(trace.status, RunStatus::Diverged { .. }));
    assert!(!trace.records.is_empty());
    let gd = gradient_descent(&prob, &DVector::from_element(1, 2.0), 100, 5.0).unwrap();
    assert!(matches!(gd.status, RunStatus::Diverged { .. }));
}

#[test]
fn invalid_configs_rejected() {
    assert!(SvrgConfig::new(0, 1, 0.1, est()).is_err());
    assert!(SvrgConfig::new(1, 0, 0.1, est()).is_err());
    assert!(SvrgConfig::new(1, 1, 0.0, est()).is_err());
    let base = SvrgConfig::new(1, 1, 0.1, est()).unwrap();
    assert!(ScsgConfig::new(base, 0, 1).is_err());
    assert!(ScsgConfig::new(base, 1, 0).is_err());
}

#[test]
fn runs_are_reproducible() {
    let prob = synthetic();
    let x0 = DVector::from_vec(vec![1.0, 0.0, -1.0]);
    let base = SvrgConfig::new(3, 20, 0.1, est()).unwrap();
    let scsg = ScsgConfig::new(base, 2, 4).unwrap();
    let a = simulated_scsg(&prob, &x0, &scsg, &RandomSource::new(8)).unwrap();
    let b = simulated_scsg(&prob, &x0, &scsg, &RandomSource::new(8)).unwrap();
    assert!(same_path(&a, &b));
    let c = simulated_svrg(&prob, &x0, &base, &RandomSource::new(8)).unwrap();
    let d = simulated_svrg(&prob, &x0, &base, &RandomSource::new(8)).unwrap();
    assert!(same_path(&c, &d));
    let e = simulated_svrg(&prob, &x0, &base, &RandomSource::new(9)).unwrap();
    assert!(!same_path(&c, &e));
}

#[test]
fn counters_are_nondecreasing() {
    let prob = synthetic();
    let base = SvrgConfig::new(5, 10, 0.1, est()).unwrap();
    let trace = simulated_scsg(
        &prob,
        &DVector::zeros(3),
        &ScsgConfig::new(base, 3, 2).unwrap(),
        &RandomSource::new(1),
    )
    .unwrap();
    assert_eq!(trace.records.len(), 6);
    for w in trace.records.windows(2) {
        assert!(w[1].steps == w[0].steps + 10);
        assert!(w[1].inner_evals > w[0].inner_evals);
        assert!(w[1].elapsed >= w[0].elapsed);
    }
}

fn svrg_mean_gaps(seeds: u64) -> Vec<f64> {
    let prob = synthetic();
    let xs = prob.closed_form_minimizer().unwrap();
    let f_star = exact_objective(&prob, &xs).unwrap();
    let x0 = DVector::from_vec(vec![2.0, -2.0, 1.0]);
    let cfg = SvrgConfig::new(15, 30, 0.1, est()).unwrap();
    let mut mean = vec![0.0; 16];
    for seed in 0..seeds {
        let t = simulated_svrg(&prob, &x0, &cfg, &RandomSource::new(seed)).unwrap();
        for (m, g) in mean.iter_mut().zip(t.gaps(f_star)) {
            *m += g / seeds as f64;
        }
    }
    mean
}

#[test]
fn svrg_descends_in_expectation_at_a_linear_rate() {
    let mean = svrg_mean_gaps(20);
    for w in mean.windows(2) {
        assert!(w[1] <= w[0], "{mean:?}");
    }
    let logs: Vec<f64> = mean[2..=15].iter().map(|g| g.log10()).collect();
    let slope = least_squares_slope(&logs);
    assert!(slope <= -0.05, "slope {slope}");
}

#[test]
fn scsg_plateau_falls_with_larger_anchor_budget() {
    let prob = synthetic();
    let xs = prob.closed_form_minimizer().unwrap();
    let f_star = exact_objective(&prob, &xs).unwrap();
    let x0 = DVector::from_vec(vec![2.0, -2.0, 1.0]);
    let base = SvrgConfig::new(15, 30, 0.1, est()).unwrap();
    let plateau = |batch: usize, reps: usize| {
        let cfg = ScsgConfig::new(base, batch, reps).unwrap();
        let mut finals: Vec<f64> = (0..20)
            .map(|seed| {
                let t = simulated_scsg(&prob, &x0, &cfg, &RandomSource::new(seed)).unwrap();
                let gaps = t.gaps(f_star);
                gaps[10..].iter().sum::<f64>() / gaps[10..].len() as f64
            })
            .collect();
        finals.sort_by(f64::total_cmp);
        (finals[9] + finals[10]) / 2.0
    };
    let small = plateau(1, 2);
    let large = plateau(4, 5);
    assert!(large < small, "plateau {large:e} not below {small:e}");
}

#[test]
fn cox_event_times_are_standard_exponential_without_signal() {
    let n = 10_000;
    let mut rng = RandomSource::new(5).stream();
    let x = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut t = sample_event_times(&x, &DVector::zeros(1), &mut rng);
    t.sort_by(f64::total_cmp);
    let exp = Exp::new(1.0).unwrap();
    let d = t
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = exp.cdf(v);
            (c - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - c)
        })
        .fold(0.0, f64::max);
    assert!(d <= 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    // the generator itself hits the censoring window at this size
    let data = generate_cox_data_with(500, 1, 0.3, 5, &DVector::zeros(1)).unwrap();
    assert!((data.censoring_fraction() - 0.3).abs() <= 0.05);
}

#[test]
fn cox_gradient_descent_is_monotone() {
    let prob = CoxProblem::new(generate_cox_data(300, 8, 0.3, 2).unwrap()).unwrap();
    let trace = gradient_descent(&prob, &DVector::from_element(8, 0.5), 100, 0.1).unwrap();
    let f = trace.objectives();
    for w in f.windows(2) {
        assert!(w[1].unwrap() <= w[0].unwrap() + 1e-15);
    }
}

#[test]
fn unbiased_gradient_runs_on_cox() {
    let prob = CoxProblem::new(generate_cox_data(100, 4, 0.3, 6).unwrap()).unwrap();
    let mut rng = RandomSource::new(3).stream();
    let s = unbiased_gradient(&prob, 0, &DVector::zeros(4), &est(), &mut rng).unwrap();
    assert!(s.grad.iter().all(|g| g.is_finite()));
}
