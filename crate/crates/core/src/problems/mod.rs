//! Built-in problem instances.

mod cox;
mod linear;
mod noisy;
mod synthetic;

pub use cox::{
    default_true_coefficients, generate_cox_data, generate_cox_data_with, sample_event_times,
    CoxDataset, CoxProblem,
};
pub use linear::LinearOuter;
pub use noisy::NoisyAffineComposition;
pub use synthetic::SyntheticComposition;
