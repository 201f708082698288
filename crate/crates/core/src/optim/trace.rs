use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::problem::{exact_objective, CompositionProblem};

/// State at the end of one epoch (epoch 0 is the starting point).
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Cumulative optimizer steps.
    pub steps: u64,
    /// Cumulative inner-function evaluations, anchors included.
    pub inner_evals: u64,
    /// `F` at the recorded iterate, when the problem can be evaluated exactly.
    pub objective: Option<f64>,
    pub iterate: DVector<f64>,
    pub elapsed: Duration,
    /// Inner step chosen as the epoch output under [`super::EpochOutput::RandomInner`].
    pub output_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Iterate norm left the divergence bound during `epoch`.
    Diverged {
        epoch: usize,
        norm: f64,
    },
    /// An estimate or anchor gradient was non-finite during `epoch`.
    Overflow {
        epoch: usize,
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub records: Vec<EpochRecord>,
    pub status: RunStatus,
}

impl RunTrace {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn final_iterate(&self) -> Option<&DVector<f64>> {
        self.records.last().map(|r| &r.iterate)
    }

    pub fn objectives(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// `F(x̃_s) - f_star` per record.
    pub fn gaps(&self, f_star: f64) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.objective.map_or(f64::NAN, |f| f - f_star))
            .collect()
    }
}

pub(crate) struct Recorder {
    start: Instant,
    pub steps: u64,
    pub inner_evals: u64,
    records: Vec<EpochRecord>,
}

impl Recorder {
    pub fn new() -> Self {
        Recorder {
            start: Instant::now(),
            steps: 0,
            inner_evals: 0,
            records: Vec::new(),
        }
    }

    pub fn record<P: CompositionProblem + ?Sized>(
        &mut self,
        problem: &P,
        epoch: usize,
        iterate: &DVector<f64>,
        output_index: Option<usize>,
    ) {
        self.records.push(EpochRecord {
            epoch,
            steps: self.steps,
            inner_evals: self.inner_evals,
            objective: exact_objective(problem, iterate).ok(),
            iterate: iterate.clone(),
            elapsed: self.start.elapsed(),
            output_index,
        });
    }

    pub fn finish(self, status: RunStatus) -> RunTrace {
        RunTrace {
            records: self.records,
            status,
        }
    }
}
