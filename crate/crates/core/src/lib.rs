//! Consensus-based optimisation for simple bi-level problems.
//!
//! A particle ensemble explores the search space; at every step the particles
//! in the lowest `beta`-quantile of the lower-level objective `L` are averaged
//! with Gibbs weights `exp(-alpha G)` of the upper-level objective `G`, and
//! every particle drifts towards that consensus point under multiplicative
//! noise. The crate also ships the penalty and projection baselines, the
//! Ackley benchmarks, and the experiment harness used to compare them.

mod scalar;

pub mod baselines;
pub mod consensus;
pub mod diffusion;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod instability;
pub mod metrics;
pub mod problem;
pub mod problems;
pub mod rng;

pub use consensus::{
    consensus_point, consensus_point_regularized, quantile_value, selection_size, ConsensusEngine,
    ConsensusResult, ConsensusRule,
};
pub use diffusion::DiffusionKind;
pub use dynamics::{cb2o_step, run, Cb2oParams, RunOptions, RunTrace, StopReason};
pub use ensemble::{init_ensemble, Ensemble, InitSpec};
pub use error::{Error, Result};
pub use problem::{BiLevelProblem, Manifold, Sphere};
pub use rng::RngStream;
pub use scalar::Scalar;

pub type Ensemble64 = Ensemble<f64>;
pub type Ensemble32 = Ensemble<f32>;
pub type Problem64 = BiLevelProblem<f64>;
pub type Problem32 = BiLevelProblem<f32>;
pub type ConsensusResult64 = ConsensusResult<f64>;
pub type ConsensusResult32 = ConsensusResult<f32>;
