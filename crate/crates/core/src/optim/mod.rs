//! Optimizers driven by simulated gradients, plus deterministic baselines.

mod gd;
mod sgd;
mod trace;
mod vr;

pub use gd::{gradient_descent, reference_solve, ReferenceSolution};
pub use sgd::{simulated_sgd, StepSchedule};
pub use trace::{EpochRecord, RunStatus, RunTrace};
pub use vr::{scsg_anchor, simulated_scsg, simulated_svrg, ScsgConfig, SvrgConfig};

/// How an epoch picks the point passed on to the next epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EpochOutput {
    /// The last inner iterate `x_M`.
    Last,
    /// `x_t` for `t` uniform on `0..M`.
    #[default]
    RandomInner,
}

/// Iterates whose norm exceeds this are reported as diverged.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e8;
