//! CB2O time stepping, schedulers, stopping and re-initialisation.

mod minibatch;
mod params;
mod run;
mod step;

pub use minibatch::{
    minibatch_objective, DatasetObjective, MiniBatchObjective, MiniBatchProblem, MiniBatchSampler,
};
pub use params::{Cb2oParams, Effective, Regularization, ScheduleRule, ScheduleTarget, Scheduler};
pub use run::{
    reinit_if_stuck, run, run_source, run_with, Checkpoint, IterRecord, PenaltyState,
    ProblemSource, ReinitState, RunOptions, RunSummary, RunTrace, StaticProblem, StopReason,
    TraceLevel, REINIT_TOL,
};
pub use step::{cb2o_step, GradientTerm, StepConfig, Stepper};

pub(crate) use run::{drive, Method};
