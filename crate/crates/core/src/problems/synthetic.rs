use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problem::{CompositionProblem, InnerFamily, OuterFamily};
use crate::random::RandomSource;

/// Synthetic finite-sum composition with quadratic outer functions
/// `f_v(y) = ½‖y - a_v‖²` and affine (optionally warped) inner maps
/// `g_j(x) = φ(A_j x + b_j)`.
///
/// With `nonlinear = false`, `φ` is the identity and `F` is a convex quadratic
/// whose minimizer solves the least-squares problem `min ‖Ā x - (ā - b̄)‖`.
/// With `nonlinear = true`, `φ(z) = z + ½ tanh(z)` componentwise, whose derivative
/// stays in `[1, 1.5]`.
#[derive(Clone, Debug)]
pub struct SyntheticComposition {
    targets: Vec<DVector<f64>>,
    maps: Vec<(DMatrix<f64>, DVector<f64>)>,
    nonlinear: bool,
}

fn warp(z: f64) -> f64 {
    z + 0.5 * z.tanh()
}

fn warp_slope(z: f64) -> f64 {
    let t = z.tanh();
    1.0 + 0.5 * (1.0 - t * t)
}

fn gaussian_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    scale: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

fn orthonormal_columns<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    gaussian_matrix(rows, cols, 1.0, rng)
        .qr()
        .q()
        .columns(0, cols)
        .into_owned()
}

impl SyntheticComposition {
    pub fn from_parts(
        targets: Vec<DVector<f64>>,
        maps: Vec<(DMatrix<f64>, DVector<f64>)>,
        nonlinear: bool,
    ) -> Result<Self> {
        let Some((a0, _)) = maps.first() else {
            return Err(Error::InvalidData(
                "at least one inner map is required".into(),
            ));
        };
        if targets.is_empty() {
            return Err(Error::InvalidData(
                "at least one outer target is required".into(),
            ));
        }
        let (d, p) = a0.shape();
        if d == 0 || p == 0 {
            return Err(Error::InvalidData("dimensions must be positive".into()));
        }
        for (a, b) in &maps {
            if a.shape() != (d, p) || b.len() != d {
                return Err(Error::InvalidData(
                    "inner maps have inconsistent shapes".into(),
                ));
            }
        }
        if let Some(t) = targets.iter().find(|t| t.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: t.len(),
            });
        }
        Ok(SyntheticComposition {
            targets,
            maps,
            nonlinear,
        })
    }

    /// Random instance with `n` outer targets and `m` inner maps `R^p -> R^d`.
    ///
    /// The mean map `Ā` is built from random orthonormal factors with singular
    /// values in `[0.5, 2]`; the individual `A_j` scatter around it with zero mean.
    pub fn generate(
        n: usize,
        m: usize,
        d: usize,
        p: usize,
        seed: u64,
        nonlinear: bool,
    ) -> Result<Self> {
        if n == 0 || m == 0 || d == 0 || p == 0 {
            return Err(Error::InvalidConfig(
                "synthetic dimensions must be positive".into(),
            ));
        }
        let mut rng = RandomSource::new(seed).stream();
        let r = d.min(p);
        let u = orthonormal_columns(d, r, &mut rng);
        let v = orthonormal_columns(p, r, &mut rng);
        let s = DMatrix::from_diagonal(&DVector::from_fn(r, |_, _| rng.random_range(0.5..=2.0)));
        let a_bar = &u * s * v.transpose();

        let mut scatter: Vec<DMatrix<f64>> = (0..m)
            .map(|_| gaussian_matrix(d, p, 0.3, &mut rng))
            .collect();
        let mean_scatter = scatter.iter().fold(DMatrix::zeros(d, p), |acc, e| acc + e) / m as f64;
        for e in &mut scatter {
            *e -= &mean_scatter;
        }
        let maps = scatter
            .into_iter()
            .map(|e| {
                let b = DVector::from_fn(d, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
                (&a_bar + e, b)
            })
            .collect();
        let targets = (0..n)
            .map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self::from_parts(targets, maps, nonlinear)
    }

    pub fn is_nonlinear(&self) -> bool {
        self.nonlinear
    }

    pub fn targets(&self) -> &[DVector<f64>] {
        &self.targets
    }

    pub fn maps(&self) -> &[(DMatrix<f64>, DVector<f64>)] {
        &self.maps
    }

    /// Mean inner map `(Ā, b̄)`.
    pub fn mean_map(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (d, p) = self.maps[0].0.shape();
        let m = self.maps.len() as f64;
        let (a, b) = self.maps.iter().fold(
            (DMatrix::zeros(d, p), DVector::zeros(d)),
            |(sa, sb), (a, b)| (sa + a, sb + b),
        );
        (a / m, b / m)
    }

    /// Minimum-norm minimizer of the affine instance; `None` when the inner maps are warped.
    pub fn closed_form_minimizer(&self) -> Option<DVector<f64>> {
        if self.nonlinear {
            return None;
        }
        let (a_bar, b_bar) = self.mean_map();
        let t_bar = self
            .targets
            .iter()
            .fold(DVector::zeros(b_bar.len()), |acc, t| acc + t)
            / self.targets.len() as f64;
        a_bar.svd(true, true).solve(&(t_bar - b_bar), 1e-12).ok()
    }

    fn pre_activation(&self, j: usize, x: &DVector<f64>) -> DVector<f64> {
        let (a, b) = &self.maps[j];
        a * x + b
    }
}

impl CompositionProblem for SyntheticComposition {
    type InnerDraw = usize;

    fn dimension(&self) -> usize {
        self.maps[0].0.ncols()
    }

    fn inner_dimension(&self) -> usize {
        self.maps[0].0.nrows()
    }

    fn outer_family(&self) -> OuterFamily {
        OuterFamily::Finite(self.targets.len())
    }

    fn inner_family(&self, _v: usize) -> InnerFamily {
        InnerFamily::Finite(self.maps.len())
    }

    fn sample_inner<R: Rng + ?Sized>(&self, _v: usize, rng: &mut R) -> usize {
        rng.random_range(0..self.maps.len())
    }

    fn inner_member(&self, v: usize, j: usize) -> Result<usize> {
        if j >= self.maps.len() {
            return Err(Error::InnerOutOfRange {
                component: v,
                index: j,
                size: self.maps.len(),
            });
        }
        Ok(j)
    }

    fn eval_inner(&self, _v: usize, w: &usize, x: &DVector<f64>) -> DVector<f64> {
        let z = self.pre_activation(*w, x);
        if self.nonlinear {
            z.map(warp)
        } else {
            z
        }
    }

    fn jac_inner(&self, _v: usize, w: &usize, x: &DVector<f64>) -> DMatrix<f64> {
        let a = &self.maps[*w].0;
        if !self.nonlinear {
            return a.clone();
        }
        let z = self.pre_activation(*w, x);
        let mut jac = a.clone();
        for (i, mut row) in jac.row_iter_mut().enumerate() {
            row *= warp_slope(z[i]);
        }
        jac
    }

    fn eval_outer(&self, v: usize, y: &DVector<f64>) -> f64 {
        0.5 * (y - &self.targets[v]).norm_squared()
    }

    fn grad_outer(&self, v: usize, y: &DVector<f64>) -> DVector<f64> {
        y - &self.targets[v]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{exact_full_gradient, exact_objective};

    #[test]
    fn unit_quadratic() {
        let prob = SyntheticComposition::from_parts(
            vec![DVector::zeros(2)],
            vec![(DMatrix::identity(2, 2), DVector::zeros(2))],
            false,
        )
        .unwrap();
        let x = DVector::from_vec(vec![3.0, -4.0]);
        assert_eq!(exact_objective(&prob, &x).unwrap(), 12.5);
        assert_eq!(prob.closed_form_minimizer().unwrap().norm(), 0.0);
    }

    #[test]
    fn generation_is_reproducible() {
        let a = SyntheticComposition::generate(4, 8, 2, 3, 99, true).unwrap();
        let b = SyntheticComposition::generate(4, 8, 2, 3, 99, true).unwrap();
        assert_eq!(a.targets, b.targets);
        assert_eq!(a.maps, b.maps);
        let c = SyntheticComposition::generate(4, 8, 2, 3, 100, true).unwrap();
        assert_ne!(a.maps, c.maps);
    }

    #[test]
    fn singular_values_clamped() {
        for (d, p) in [(2, 3), (4, 3), (3, 3)] {
            let prob = SyntheticComposition::generate(4, 8, d, p, 5, false).unwrap();
            let (a_bar, _) = prob.mean_map();
            for s in a_bar.singular_values().iter() {
                assert!(*s >= 0.5 - 1e-12 && *s <= 2.0 + 1e-12, "singular value {s}");
            }
        }
    }

    #[test]
    fn closed_form_minimizer_is_stationary() {
        let prob = SyntheticComposition::generate(4, 8, 2, 3, 3, false).unwrap();
        let x = prob.closed_form_minimizer().unwrap();
        assert!(exact_full_gradient(&prob, &x).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn warp_slope_matches_difference() {
        for z in [-3.0, -0.2, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (warp(z + h) - warp(z - h)) / (2.0 * h);
            assert!((fd - warp_slope(z)).abs() < 1e-8);
        }
    }

    #[test]
    fn inconsistent_parts_rejected() {
        let bad = SyntheticComposition::from_parts(
            vec![DVector::zeros(3)],
            vec![(DMatrix::identity(2, 2), DVector::zeros(2))],
            false,
        );
        assert!(bad.is_err());
        assert!(SyntheticComposition::generate(0, 1, 1, 1, 0, false).is_err());
    }
}
