use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problem::{CompositionProblem, InnerFamily, OuterFamily};

/// Composition with a genuinely stochastic inner family: `g_w(x) = A x + w` with
/// `w ~ N(0, σ² I)`, and outer `f_v(y) = ½‖y - a_v‖² + Σ_k log cosh(y_k - a_vk)`.
///
/// The inner mean `A x` is known in closed form, so [`NoisyAffineComposition::true_gradient`]
/// gives an oracle without enumeration.
#[derive(Clone, Debug)]
pub struct NoisyAffineComposition {
    map: DMatrix<f64>,
    targets: Vec<DVector<f64>>,
    sigma: f64,
}

impl NoisyAffineComposition {
    pub fn new(map: DMatrix<f64>, targets: Vec<DVector<f64>>, sigma: f64) -> Result<Self> {
        if map.is_empty() || targets.is_empty() {
            return Err(Error::InvalidData("empty map or target list".into()));
        }
        if let Some(t) = targets.iter().find(|t| t.len() != map.nrows()) {
            return Err(Error::DimensionMismatch {
                expected: map.nrows(),
                got: t.len(),
            });
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidData(format!(
                "noise scale must be finite and nonnegative, got {sigma}"
            )));
        }
        Ok(NoisyAffineComposition {
            map,
            targets,
            sigma,
        })
    }

    /// Gradient of the exact component objective `f_v(A x)`.
    pub fn true_gradient(&self, v: usize, x: &DVector<f64>) -> DVector<f64> {
        let y = &self.map * x;
        self.map.tr_mul(&self.grad_outer(v, &y))
    }
}

impl CompositionProblem for NoisyAffineComposition {
    type InnerDraw = DVector<f64>;

    fn dimension(&self) -> usize {
        self.map.ncols()
    }

    fn inner_dimension(&self) -> usize {
        self.map.nrows()
    }

    fn outer_family(&self) -> OuterFamily {
        OuterFamily::Finite(self.targets.len())
    }

    fn inner_family(&self, _v: usize) -> InnerFamily {
        InnerFamily::Stochastic
    }

    fn sample_inner<R: Rng + ?Sized>(&self, _v: usize, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.map.nrows(), |_, _| {
            self.sigma * rng.sample::<f64, _>(StandardNormal)
        })
    }

    fn inner_member(&self, _v: usize, _j: usize) -> Result<DVector<f64>> {
        Err(Error::NotEnumerable("inner enumeration"))
    }

    fn eval_inner(&self, _v: usize, w: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        &self.map * x + w
    }

    fn jac_inner(&self, _v: usize, _w: &DVector<f64>, _x: &DVector<f64>) -> DMatrix<f64> {
        self.map.clone()
    }

    fn eval_outer(&self, v: usize, y: &DVector<f64>) -> f64 {
        let r = y - &self.targets[v];
        0.5 * r.norm_squared() + r.iter().map(|z| z.cosh().ln()).sum::<f64>()
    }

    fn grad_outer(&self, v: usize, y: &DVector<f64>) -> DVector<f64> {
        let r = y - &self.targets[v];
        r.map(|z| z + z.tanh())
    }
}
