use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusEngine, ConsensusResult};
use crate::ensemble::{init_ensemble, Ensemble, InitSpec};
use crate::error::{Error, Result};
use crate::problem::BiLevelProblem;
use crate::rng::RngStream;
use crate::Scalar;

use super::params::{Cb2oParams, Effective};
use super::step::{cb2o_consensus, cb2o_gradient, StepConfig, Stepper};

/// Consensus-unchanged tolerance of the re-initialisation rule.
pub const REINIT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    /// Keep only the initial and the last iteration record.
    #[default]
    Summary,
    /// Keep every iteration record.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    Failed,
}

/// Penalty state of the adaptive penalized baseline after one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyState {
    pub chi: f64,
    pub zeta: f64,
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    /// Step index `k`: the record holds `m^k` and `c_stop` measured on `theta^{k+1}`.
    pub iter: usize,
    /// Simulated time `k dt`.
    pub t: f64,
    pub consensus: Vec<f64>,
    pub c_stop: f64,
    pub lower_at_consensus: f64,
    pub upper_at_consensus: f64,
    pub precision: Option<f64>,
    /// Seconds since the start of the run.
    pub elapsed_s: f64,
    pub penalty: Option<PenaltyState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    /// Consensus point of the final ensemble.
    pub final_consensus: Vec<f64>,
    pub final_precision: Option<f64>,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub total_seconds: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub params: Cb2oParams,
    pub reinit_count: usize,
    pub well_posed: bool,
    pub error: Option<String>,
}

/// Ensemble states around one step, kept for after-the-fact verification.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iter: usize,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    /// Record of the initial ensemble (`iter = 0`, `c_stop` relative to `m^0`).
    pub init: IterRecord,
    pub records: Vec<IterRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub summary: RunSummary,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub stream_id: u64,
    pub trace: TraceLevel,
    /// Retain ensemble states around every `n`-th step.
    pub checkpoint_every: Option<usize>,
}

/// Supplies the problem for each iteration (static, or mini-batched).
pub trait ProblemSource<T> {
    fn problem(&mut self, iter: usize) -> &BiLevelProblem<T>;

    /// Completed data passes, when the source defines epochs.
    fn epoch(&self) -> Option<usize> {
        None
    }
}

pub struct StaticProblem<'a, T>(pub &'a BiLevelProblem<T>);

impl<T> ProblemSource<T> for StaticProblem<'_, T> {
    fn problem(&mut self, _iter: usize) -> &BiLevelProblem<T> {
        self.0
    }
}

/// Counter of consecutive steps with an unchanged consensus point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReinitState {
    pub frozen_steps: usize,
}

/// Perturbs every particle by `N(0, sigma^2 I)` once the consensus point has
/// stayed within [`REINIT_TOL`] for `patience` consecutive steps. Returns
/// whether the ensemble was perturbed.
pub fn reinit_if_stuck<T: Scalar>(
    state: &mut ReinitState,
    m_prev: &[T],
    m_new: &[T],
    ensemble: &mut Ensemble<T>,
    sigma: T,
    rng: &mut RngStream,
    patience: usize,
) -> bool {
    let moved = m_prev
        .iter()
        .zip(m_new)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt();
    if moved.as_f64() <= REINIT_TOL {
        state.frozen_steps += 1;
    } else {
        state.frozen_steps = 0;
    }
    if state.frozen_steps < patience.max(1) {
        return false;
    }
    state.frozen_steps = 0;
    for x in ensemble.as_flat_mut() {
        *x = *x + sigma * T::of(rng.standard_normal());
    }
    true
}

/// Solver-specific parts of the common particle loop.
pub(crate) trait Method<T: Scalar> {
    fn name(&self) -> &'static str;

    fn validate(&self, params: &Cb2oParams, problem: &BiLevelProblem<T>) -> Result<()>;

    fn prepare(&mut self, _ens: &mut Ensemble<T>, _problem: &BiLevelProblem<T>) {}

    fn consensus<'e>(
        &mut self,
        engine: &'e mut ConsensusEngine<T>,
        ens: &Ensemble<T>,
        problem: &BiLevelProblem<T>,
        params: &Cb2oParams,
        eff: Effective,
    ) -> Result<&'e ConsensusResult<T>>;

    fn step_config<'a>(
        &self,
        problem: &'a BiLevelProblem<T>,
        params: &Cb2oParams,
        eff: Effective,
    ) -> StepConfig<'a, T>;

    fn after_step(&mut self, _m: &[T], _problem: &BiLevelProblem<T>) -> Option<PenaltyState> {
        None
    }
}

pub(crate) struct Cb2o;

impl<T: Scalar> Method<T> for Cb2o {
    fn name(&self) -> &'static str {
        "cb2o"
    }

    fn validate(&self, params: &Cb2oParams, problem: &BiLevelProblem<T>) -> Result<()> {
        if params.lambda_grad > 0.0 && problem.lower_grad.is_none() {
            return Err(Error::Config(
                "solver.lambda_grad > 0 requires a lower-level gradient".into(),
            ));
        }
        Ok(())
    }

    fn consensus<'e>(
        &mut self,
        engine: &'e mut ConsensusEngine<T>,
        ens: &Ensemble<T>,
        problem: &BiLevelProblem<T>,
        params: &Cb2oParams,
        eff: Effective,
    ) -> Result<&'e ConsensusResult<T>> {
        cb2o_consensus(engine, ens, problem, params, eff.alpha, eff.beta)
    }

    fn step_config<'a>(
        &self,
        _problem: &'a BiLevelProblem<T>,
        params: &Cb2oParams,
        eff: Effective,
    ) -> StepConfig<'a, T> {
        StepConfig {
            lambda: T::of(params.lambda),
            sigma: T::of(eff.sigma),
            dt: T::of(params.dt),
            diffusion: params.diffusion,
            gradient: cb2o_gradient(params),
            manifold: None,
        }
    }
}

/// Runs CB2O (Euler-Maruyama particle loop) until `c_stop <= eps_stop` or
/// `max_iters` steps, whichever comes first.
pub fn run<T: Scalar>(
    problem: &BiLevelProblem<T>,
    params: &Cb2oParams,
    init: &InitSpec,
    seed: u64,
) -> Result<RunTrace> {
    run_with(problem, params, init, seed, &RunOptions::default())
}

pub fn run_with<T: Scalar>(
    problem: &BiLevelProblem<T>,
    params: &Cb2oParams,
    init: &InitSpec,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunTrace> {
    drive(
        &mut StaticProblem(problem),
        params,
        init,
        seed,
        opts,
        &mut Cb2o,
    )
}

/// CB2O on a problem that changes between iterations (e.g. mini-batches).
pub fn run_source<T: Scalar>(
    source: &mut dyn ProblemSource<T>,
    params: &Cb2oParams,
    init: &InitSpec,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunTrace> {
    drive(source, params, init, seed, opts, &mut Cb2o)
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn spread<T: Scalar>(ens: &Ensemble<T>, m: &[T]) -> T {
    let mut acc = T::zero();
    for row in ens.rows() {
        for (&x, &c) in row.iter().zip(m) {
            acc = acc + (x - c) * (x - c);
        }
    }
    acc / T::of((ens.dim() * ens.n_particles()) as f64)
}

fn precision_of<T: Scalar>(m: &[T], good: Option<&Vec<T>>) -> Option<f64> {
    good.map(|g| {
        m.iter()
            .zip(g)
            .map(|(&a, &b)| (a - b).as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    })
}

pub(crate) fn drive<T: Scalar, M: Method<T>>(
    source: &mut dyn ProblemSource<T>,
    params: &Cb2oParams,
    init: &InitSpec,
    seed: u64,
    opts: &RunOptions,
    method: &mut M,
) -> Result<RunTrace> {
    params.validate()?;
    let start = Instant::now();
    let mut rng = RngStream::new(seed, opts.stream_id);

    let problem0 = source.problem(0);
    method.validate(params, problem0)?;
    let d = problem0
        .dim()
        .or_else(|| match init {
            InitSpec::Points { points } => points.first().map(Vec::len),
            InitSpec::Gaussian { mean: Some(m), .. } => Some(m.len()),
            _ => None,
        })
        .ok_or_else(|| Error::Config("cannot infer the problem dimension".into()))?;
    let well_posed = params.well_posed(d);
    if params.warn_well_posedness && !well_posed {
        log::warn!(
            "2 lambda = {} does not exceed the noise level ({:?}, d = {d}, sigma = {}); \
             the mean-field convergence guarantee does not apply",
            2.0 * params.lambda,
            params.diffusion,
            params.sigma
        );
    }

    let mut ens: Ensemble<T> = init_ensemble(params.n_particles, d, init, &mut rng)?;
    method.prepare(&mut ens, problem0);

    let mut engine = ConsensusEngine::new();
    let mut stepper = Stepper::new(d);
    let epoch_at = |k: usize, src_epoch: Option<usize>| {
        move |len: Option<usize>| src_epoch.unwrap_or(k / len.unwrap_or(params.epoch_len))
    };

    let eff0 = params.effective(epoch_at(0, source.epoch()));
    let problem0 = source.problem(0);
    let m0 = method
        .consensus(&mut engine, &ens, problem0, params, eff0)?
        .point
        .clone();
    let init_record = IterRecord {
        iter: 0,
        t: 0.0,
        c_stop: spread(&ens, &m0).as_f64(),
        lower_at_consensus: problem0.lower(&m0).as_f64(),
        upper_at_consensus: problem0.upper(&m0).as_f64(),
        precision: precision_of(&m0, problem0.theta_good.as_ref()),
        consensus: to_f64(&m0),
        elapsed_s: start.elapsed().as_secs_f64(),
        penalty: None,
    };

    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    let mut reinit = ReinitState::default();
    let mut reinit_count = 0;
    let mut m_prev: Option<Vec<T>> = None;
    let mut c_stop = f64::INFINITY;
    let mut k = 0;
    let mut failure: Option<Error> = None;
    let mut eff = eff0;

    while c_stop > params.eps_stop && k < params.max_iters {
        eff = params.effective(epoch_at(k, source.epoch()));
        let problem = source.problem(k);
        let m = match method.consensus(&mut engine, &ens, problem, params, eff) {
            Ok(r) => r.point.clone(),
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let keep_checkpoint = opts.checkpoint_every.is_some_and(|c| c > 0 && k % c == 0);
        let before = keep_checkpoint.then(|| to_f64(ens.as_flat()));
        let cfg = method.step_config(problem, params, eff);
        let c = match stepper.update(&mut ens, &m, problem, &cfg, &mut rng) {
            Ok(c) => c,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        c_stop = c.as_f64();
        if let Some(before) = before {
            checkpoints.push(Checkpoint {
                iter: k,
                before,
                after: to_f64(ens.as_flat()),
            });
        }
        let penalty = method.after_step(&m, problem);
        if opts.trace == TraceLevel::Full || c_stop <= params.eps_stop || k + 1 == params.max_iters
        {
            records.push(IterRecord {
                iter: k,
                t: k as f64 * params.dt,
                consensus: to_f64(&m),
                c_stop,
                lower_at_consensus: problem.lower(&m).as_f64(),
                upper_at_consensus: problem.upper(&m).as_f64(),
                precision: precision_of(&m, problem.theta_good.as_ref()),
                elapsed_s: start.elapsed().as_secs_f64(),
                penalty,
            });
        }
        if let Some(patience) = params.reinit_patience {
            if let Some(prev) = &m_prev {
                if reinit_if_stuck(
                    &mut reinit,
                    prev,
                    &m,
                    &mut ens,
                    T::of(eff.sigma),
                    &mut rng,
                    patience,
                ) {
                    reinit_count += 1;
                    log::debug!(
                        "re-initialised ensemble at step {k} (sigma = {})",
                        eff.sigma
                    );
                }
            }
        }
        m_prev = Some(m);
        k += 1;
    }

    let problem = source.problem(k);
    let (final_consensus, stop_reason, error) = match failure {
        Some(e) => {
            let last = records
                .last()
                .map(|r| r.consensus.clone())
                .unwrap_or_else(|| init_record.consensus.clone());
            (last, StopReason::Failed, Some(e.to_string()))
        }
        None => {
            let m = method
                .consensus(&mut engine, &ens, problem, params, eff)
                .map(|r| to_f64(&r.point));
            match m {
                Ok(m) => {
                    let reason = if k > 0 && c_stop <= params.eps_stop {
                        StopReason::Converged
                    } else {
                        StopReason::MaxIters
                    };
                    (m, reason, None)
                }
                Err(e) => (
                    records
                        .last()
                        .map(|r| r.consensus.clone())
                        .unwrap_or_else(|| init_record.consensus.clone()),
                    StopReason::Failed,
                    Some(e.to_string()),
                ),
            }
        }
    };
    let good = problem.theta_good.as_ref().map(|g| to_f64(g));
    let final_precision = good.as_ref().map(|g| {
        final_consensus
            .iter()
            .zip(g)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    });

    Ok(RunTrace {
        init: init_record,
        records,
        checkpoints,
        summary: RunSummary {
            method: method.name().to_string(),
            final_consensus,
            final_precision,
            stop_reason,
            iterations: k,
            total_seconds: start.elapsed().as_secs_f64(),
            seed,
            stream_id: opts.stream_id,
            params: params.clone(),
            reinit_count,
            well_posed,
            error,
        },
    })
}
