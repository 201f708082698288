use rand::Rng;
use rand_distr::{Distribution, Geometric};

use super::EstimatorConfig;
use crate::error::{Error, Result};

/// `P(N = n) = (1 - p) p^n`.
pub fn level_pmf(config: &EstimatorConfig, n: u32) -> f64 {
    let p = config.p_geom();
    (1.0 - p) * p.powi(n as i32)
}

/// Truncated, renormalized pmf on `0..=n1-n0`: `p^n2 (1-p) / (1 - p^(n1-n0+1))`.
pub fn truncated_level_pmf(config: &EstimatorConfig, n1: u32, n2: u32) -> f64 {
    if n1 <= config.n0() || n2 > n1 - config.n0() {
        return 0.0;
    }
    let p = config.p_geom();
    let support = (n1 - config.n0() + 1) as i32;
    p.powi(n2 as i32) * (1.0 - p) / (1.0 - p.powi(support))
}

/// `E[2^(N+n0+1)] = 2^(n0+1) (1 - 2^-gamma) / (1 - 2^(1-gamma))`.
pub fn expected_inner_draws(config: &EstimatorConfig) -> f64 {
    let g = config.gamma();
    2f64.powi(config.n0() as i32 + 1) * (1.0 - 0.5f64.powf(g)) / (1.0 - 2f64.powf(1.0 - g))
}

/// Draws the level `N` (number of failures before a success of probability `1-p`).
pub fn sample_level<R: Rng + ?Sized>(config: &EstimatorConfig, rng: &mut R) -> u32 {
    let dist = Geometric::new(1.0 - config.p_geom()).expect("1 - p lies in (0, 1) for valid gamma");
    dist.sample(rng).min(u32::MAX as u64) as u32
}

/// Draws `N2 = N mod (n1 - n0 + 1)`, which has exactly the truncated pmf.
pub fn sample_truncated_level<R: Rng + ?Sized>(
    config: &EstimatorConfig,
    n1: u32,
    rng: &mut R,
) -> Result<u32> {
    if n1 <= config.n0() {
        return Err(Error::InvalidConfig(format!(
            "truncated level needs n1 > n0 (n1 = {n1}, n0 = {})",
            config.n0()
        )));
    }
    Ok(sample_level(config, rng) % (n1 - config.n0() + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::RandomSource;

    #[test]
    fn p_zero_at_gamma_one_and_a_half() {
        let c = EstimatorConfig::new(0, 1.5).unwrap();
        assert!((level_pmf(&c, 0) - 0.646446609).abs() < 1e-9);
    }

    #[test]
    fn pmf_normalizes() {
        for g in [1.01, 1.2, 1.5, 1.9, 1.99] {
            let c = EstimatorConfig::new(0, g).unwrap();
            let total: f64 = (0..=200).map(|n| level_pmf(&c, n)).sum();
            assert!(
                (1.0 - 1e-9..=1.0 + 1e-12).contains(&total),
                "gamma {g}: {total}"
            );
        }
    }

    #[test]
    fn truncated_pmf_values() {
        let c = EstimatorConfig::new(0, 1.5).unwrap();
        let p = 0.5f64.powf(1.5);
        assert!((truncated_level_pmf(&c, 1, 0) - 1.0 / (1.0 + p)).abs() < 1e-15);
        assert!((truncated_level_pmf(&c, 1, 0) - 0.738796).abs() < 1e-6);
        assert!((truncated_level_pmf(&c, 1, 1) - 0.261204).abs() < 1e-6);
        for (n0, n1) in [(0, 1), (0, 3), (2, 7), (1, 12)] {
            let c = EstimatorConfig::new(n0, 1.3).unwrap();
            let total: f64 = (0..=n1 - n0).map(|k| truncated_level_pmf(&c, n1, k)).sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn truncated_rejects_small_n1() {
        let c = EstimatorConfig::new(2, 1.5).unwrap();
        let mut rng = RandomSource::new(1).stream();
        assert!(sample_truncated_level(&c, 2, &mut rng).is_err());
        assert!(sample_truncated_level(&c, 1, &mut rng).is_err());
        for _ in 0..1000 {
            assert!(sample_truncated_level(&c, 4, &mut rng).unwrap() <= 2);
        }
    }

    #[test]
    fn empirical_p0() {
        let c = EstimatorConfig::new(0, 1.5).unwrap();
        let mut rng = RandomSource::new(11).stream();
        let draws = 1_000_000;
        let zeros = (0..draws)
            .filter(|_| sample_level(&c, &mut rng) == 0)
            .count();
        assert!((zeros as f64 / draws as f64 - 0.646447).abs() < 0.002);
    }

    #[test]
    fn expected_cost_closed_form() {
        let c = EstimatorConfig::new(0, 1.5).unwrap();
        assert!((expected_inner_draws(&c) - 4.414213562).abs() < 1e-8);
        // Same value by summing the series directly.
        let series: f64 = (0..400)
            .map(|n| 2f64.powi(n + 1) * level_pmf(&c, n as u32))
            .sum();
        assert!((series - expected_inner_draws(&c)).abs() < 1e-9);
    }
}
