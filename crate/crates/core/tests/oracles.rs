//! Exact-oracle checks: finite differences, independent summation, and the two Cox code paths.

use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use simgrad_core::problem::{
    exact_component_gradient, exact_full_gradient, exact_inner_mean, exact_objective,
};
use simgrad_core::problems::{generate_cox_data, CoxProblem, SyntheticComposition};
use simgrad_core::{CompositionProblem, DMatrix, DVector, InnerBatchStats, RandomSource};

fn random_in_ball<R: Rng>(p: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    let dir = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let r = radius * rng.random::<f64>().powf(1.0 / p as f64);
    dir.normalize() * r
}

fn central_difference<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut up = x.clone();
        let mut down = x.clone();
        up[i] += h;
        down[i] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

fn assert_close(analytic: &DVector<f64>, numeric: &DVector<f64>, rel: f64, what: &str) {
    let scale = analytic.amax().max(1.0);
    let err = (analytic - numeric).amax();
    assert!(
        err <= rel * scale,
        "{what}: error {err:e} exceeds {rel:e} * {scale}"
    );
}

fn check_problem_fd<P: CompositionProblem<InnerDraw = usize>>(problem: &P, seed: u64, radius: f64) {
    let mut rng = RandomSource::new(seed).stream();
    let p = problem.dimension();
    for _ in 0..20 {
        let x = random_in_ball(p, radius, &mut rng);
        let g = exact_full_gradient(problem, &x).unwrap();
        let fd = central_difference(|z| exact_objective(problem, z).unwrap(), &x, 1e-5);
        assert_close(&g, &fd, 1e-5, "full gradient");

        // inner Jacobian and outer gradient of a single member
        let v = 0;
        let w = problem.inner_member(v, 0).unwrap();
        let jac = problem.jac_inner(v, &w, &x);
        for row in 0..problem.inner_dimension() {
            let fd_row = central_difference(|z| problem.eval_inner(v, &w, z)[row], &x, 1e-5);
            assert_close(&jac.row(row).transpose(), &fd_row, 1e-5, "inner jacobian");
        }
        let y = problem.eval_inner(v, &w, &x);
        let fd_outer = central_difference(|z| problem.eval_outer(v, z), &y, 1e-5);
        assert_close(
            &problem.grad_outer(v, &y),
            &fd_outer,
            1e-5,
            "outer gradient",
        );
    }
}

#[test]
fn finite_differences_synthetic_affine() {
    let prob = SyntheticComposition::generate(4, 8, 2, 3, 1, false).unwrap();
    check_problem_fd(&prob, 10, 1.0);
}

#[test]
fn finite_differences_synthetic_warped() {
    let prob = SyntheticComposition::generate(5, 7, 4, 3, 2, true).unwrap();
    check_problem_fd(&prob, 11, 1.0);
}

#[test]
fn finite_differences_cox() {
    let prob = CoxProblem::new(generate_cox_data(120, 6, 0.3, 3).unwrap()).unwrap();
    check_problem_fd(&prob, 12, 1.0);
    let mut rng = RandomSource::new(13).stream();
    for _ in 0..5 {
        let beta = random_in_ball(6, 1.0, &mut rng);
        let fd = central_difference(|z| prob.cox_objective(z), &beta, 1e-5);
        let g = prob.cox_full_gradient(&beta);
        let rel = (&g - &fd).norm() / g.norm().max(1e-8);
        assert!(
            rel <= 1e-6,
            "direct Cox gradient vs finite differences: {rel:e}"
        );
    }
}

#[test]
fn linear_family_mean_matches_direct_summation() {
    let mut rng = RandomSource::new(5).stream();
    let maps: Vec<(DMatrix<f64>, DVector<f64>)> = (0..8)
        .map(|_| {
            (
                DMatrix::from_fn(2, 3, |_, _| rng.sample::<f64, _>(StandardNormal)),
                DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal)),
            )
        })
        .collect();
    let prob =
        SyntheticComposition::from_parts(vec![DVector::zeros(2)], maps.clone(), false).unwrap();
    let x = DVector::from_vec(vec![0.7, -1.3, 0.2]);

    let mut a_sum = DMatrix::zeros(2, 3);
    let mut b_sum = DVector::zeros(2);
    for (a, b) in &maps {
        a_sum += a;
        b_sum += b;
    }
    let a_bar = a_sum / 8.0;
    let b_bar = b_sum / 8.0;
    let (t, s) = exact_inner_mean(&prob, 0, &x).unwrap();
    assert!((t - (&a_bar * &x + b_bar)).amax() < 1e-12);
    assert!((s - &a_bar).amax() < 1e-12);

    // linear outer: gradient is Āᵀ c
    let c = DVector::from_vec(vec![1.5, -0.5]);
    let lin = simgrad_core::problems::LinearOuter::new(prob, vec![c.clone()]).unwrap();
    let g = exact_component_gradient(&lin, 0, &x).unwrap();
    assert!((g - a_bar.transpose() * c).amax() < 1e-12);
}

#[test]
fn component_average_equals_full_gradient() {
    let prob = SyntheticComposition::generate(6, 5, 3, 3, 8, true).unwrap();
    let x = DVector::from_vec(vec![0.1, 0.2, -0.3]);
    let avg = (0..6).fold(DVector::zeros(3), |acc, v| {
        acc + exact_component_gradient(&prob, v, &x).unwrap()
    }) / 6.0;
    assert!((avg - exact_full_gradient(&prob, &x).unwrap()).amax() <= 1e-12);
}

#[test]
fn deterministic_quadratic_oracle() {
    let a = DVector::from_vec(vec![1.0, 2.0, -1.0]);
    let prob = SyntheticComposition::from_parts(
        vec![a.clone()],
        vec![(DMatrix::identity(3, 3), DVector::zeros(3))],
        false,
    )
    .unwrap();
    let x = DVector::from_vec(vec![0.0, 0.5, 0.5]);
    assert_eq!(exact_full_gradient(&prob, &x).unwrap(), &x - &a);
    assert_eq!(
        exact_objective(&prob, &x).unwrap(),
        0.5 * (&x - &a).norm_squared()
    );
}

#[test]
fn cox_wiring_matches_direct_path() {
    let prob = CoxProblem::new(generate_cox_data(200, 10, 0.3, 21).unwrap()).unwrap();
    let mut rng = RandomSource::new(22).stream();
    for _ in 0..10 {
        let beta = random_in_ball(10, 1.0, &mut rng);
        let wired = exact_full_gradient(&prob, &beta).unwrap();
        let direct = prob.cox_full_gradient(&beta);
        assert!((wired - direct).amax() <= 1e-10);
        let shifted = exact_objective(&prob, &beta).unwrap();
        assert!((prob.cox_objective(&beta) - prob.objective_offset() - shifted).abs() <= 1e-10);
    }
}

#[test]
fn cox_inner_values_positive() {
    let prob = CoxProblem::new(generate_cox_data(200, 20, 0.3, 4).unwrap()).unwrap();
    let mut rng = RandomSource::new(6).stream();
    for _ in 0..20 {
        let beta = random_in_ball(20, 100.0, &mut rng);
        for v in 0..10 {
            let w = prob.sample_inner(v, &mut rng);
            let val = prob.eval_inner(v, &w, &beta)[0];
            assert!(
                val > 0.0 && val.is_finite(),
                "inner value {val} at ‖β‖ = {}",
                beta.norm()
            );
        }
    }
}

#[test]
fn not_enumerable_rejected() {
    use simgrad_core::problems::NoisyAffineComposition;
    let prob =
        NoisyAffineComposition::new(DMatrix::identity(2, 2), vec![DVector::zeros(2)], 0.1).unwrap();
    let x = DVector::zeros(2);
    assert!(matches!(
        exact_inner_mean(&prob, 0, &x),
        Err(simgrad_core::Error::NotEnumerable(_))
    ));
    assert!(exact_full_gradient(&prob, &x).is_err());
    assert!(exact_objective(&prob, &x).is_err());
}

proptest! {
    #[test]
    fn merge_law(seed in 0u64..1000, half in 1usize..16) {
        let prob = SyntheticComposition::generate(2, 9, 3, 4, seed, true).unwrap();
        let mut rng = RandomSource::new(seed).stream();
        let x = random_in_ball(4, 1.0, &mut rng);
        let draws: Vec<usize> = (0..2 * half).map(|_| prob.sample_inner(0, &mut rng)).collect();
        let first = InnerBatchStats::from_draws(&prob, 0, &x, &draws[..half]);
        let second = InnerBatchStats::from_draws(&prob, 0, &x, &draws[half..]);
        let merged = first.merge(&second).unwrap();
        let direct = InnerBatchStats::from_draws(&prob, 0, &x, &draws);
        prop_assert_eq!(merged.count, 2 * half);
        prop_assert!((merged.s_bar - direct.s_bar).amax() <= 1e-12);
        prop_assert!((merged.t_bar - direct.t_bar).amax() <= 1e-12);
    }
}
