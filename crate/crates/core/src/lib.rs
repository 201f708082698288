//! Unbiased gradient simulation for stochastic composition problems
//! `min_x E_v f_v(E_w g_w(x))`.
//!
//! The crate provides
//! - the [`CompositionProblem`] abstraction with exact enumeration oracles,
//! - randomized multilevel Monte Carlo gradient estimators (untruncated, truncated
//!   finite-sum and coupled variance-reduced forms) in [`estimator`],
//! - simulated SVRG / SCSG, simulated SGD and gradient descent in [`optim`],
//! - a synthetic quadratic family and the ridge-regularized Cox partial likelihood
//!   in [`problems`].

pub mod error;
pub mod estimator;
pub mod optim;
pub mod problem;
pub mod problems;
pub mod random;

pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, EstimatorForm, GradientSample};
pub use problem::{
    exact_component_gradient, exact_full_gradient, exact_inner_mean, exact_objective,
    CompositionProblem, InnerBatchStats, InnerFamily, OuterFamily,
};
pub use random::RandomSource;

pub use nalgebra::{DMatrix, DVector};
