use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Solver};
use super::output::{fmt_f64, git_hash, write_csv, write_json};
use crate::baselines::run_baseline;
use crate::dynamics::{run_with, RunOptions, RunTrace, StopReason, TraceLevel};
use crate::error::{Error, Result};
use crate::metrics::PrecisionSummary;
use crate::problems::{benchmark, BenchmarkSpec};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub precision: Option<f64>,
    pub iterations: usize,
    pub runtime_s: f64,
    pub stop_reason: StopReason,
    pub final_consensus: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub summary: PrecisionSummary,
    /// Ordered by replicate index regardless of execution order.
    pub replicates: Vec<ReplicateResult>,
}

impl ExperimentOutcome {
    /// Replicates that ended with a runtime failure.
    pub fn failures(&self) -> impl Iterator<Item = &ReplicateResult> {
        self.replicates.iter().filter(|r| r.error.is_some())
    }
}

/// Builds a pool with `workers` threads (all cores when `None`).
pub(crate) fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn solve(cfg: &ExperimentConfig, spec: &BenchmarkSpec<f64>, seed: u64) -> Result<RunTrace> {
    let init = cfg.init.as_ref().unwrap_or(&spec.default_init);
    let mut params = cfg.solver.clone();
    // warned once per experiment instead
    params.warn_well_posedness = false;
    let opts = RunOptions {
        stream_id: 0,
        trace: cfg.trace,
        checkpoint_every: None,
    };
    match cfg.method {
        Solver::Cb2o => run_with(&spec.problem, &params, init, seed, &opts),
        Solver::Baseline(kind) => run_baseline(kind, &spec.problem, &params, init, seed, &opts),
    }
}

fn trace_rows(trace: &RunTrace) -> Vec<Vec<String>> {
    trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.iter.to_string(), fmt_f64(r.t)];
            row.extend(r.consensus.iter().map(|&x| fmt_f64(x)));
            row.extend([
                fmt_f64(r.c_stop),
                fmt_f64(r.lower_at_consensus),
                fmt_f64(r.upper_at_consensus),
                r.precision.map(fmt_f64).unwrap_or_default(),
            ]);
            row
        })
        .collect()
}

fn write_trace(dir: &Path, seed: u64, trace: &RunTrace) -> Result<()> {
    let d = trace.summary.final_consensus.len();
    let mut header = vec!["iter".to_string(), "t".to_string()];
    if d == 2 {
        header.extend(["m_x".to_string(), "m_y".to_string()]);
    } else {
        header.extend((0..d).map(|j| format!("m_{j}")));
    }
    header.extend(["c_stop", "L_m", "G_m", "precision"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        &dir.join(format!("trace_{seed}.csv")),
        &header,
        &trace_rows(trace),
    )
}

fn replicate(
    cfg: &ExperimentConfig,
    spec: &BenchmarkSpec<f64>,
    r: usize,
) -> Result<ReplicateResult> {
    let seed = cfg.base_seed.wrapping_add(r as u64);
    let start = Instant::now();
    let trace = solve(cfg, spec, seed)?;
    let runtime_s = start.elapsed().as_secs_f64();
    if cfg.trace == TraceLevel::Full {
        if let Some(dir) = &cfg.out {
            write_trace(dir, seed, &trace)?;
        }
    }
    let s = trace.summary;
    if let Some(e) = &s.error {
        log::warn!("replicate {r} (seed {seed}) failed: {e}");
    }
    Ok(ReplicateResult {
        replicate: r,
        seed,
        precision: if s.error.is_some() {
            None
        } else {
            s.final_precision
        },
        iterations: s.iterations,
        runtime_s,
        stop_reason: s.stop_reason,
        final_consensus: s.final_consensus,
        error: s.error,
    })
}

/// Runs `n_seeds` independent replicates (in parallel up to `workers`),
/// aggregates them and writes the artifacts when `out` is set.
///
/// Configuration errors abort the experiment; runtime failures of single
/// replicates are recorded per seed and excluded from the means.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let spec = benchmark::<f64>(&cfg.benchmark)?;
    if let Solver::Baseline(kind) = cfg.method {
        kind.validate(&spec.problem)?;
    }
    let d = spec.problem.dim().unwrap_or(0);
    if cfg.solver.warn_well_posedness && !cfg.solver.well_posed(d) {
        log::warn!(
            "lambda = {}, sigma = {} with {:?} diffusion in d = {d}: the drift does not dominate the noise",
            cfg.solver.lambda,
            cfg.solver.sigma,
            cfg.solver.diffusion
        );
    }
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
    }
    let results: Vec<Result<ReplicateResult>> = pool(cfg.workers)?.install(|| {
        (0..cfg.n_seeds)
            .into_par_iter()
            .map(|r| replicate(cfg, &spec, r))
            .collect()
    });
    let replicates = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = PrecisionSummary::from_replicates(
        &replicates
            .iter()
            .map(|r| (r.precision, r.runtime_s, r.stop_reason))
            .collect::<Vec<_>>(),
    );
    let outcome = ExperimentOutcome {
        config: cfg.clone(),
        summary,
        replicates,
    };
    if let Some(dir) = &cfg.out {
        write_artifacts(dir, &outcome)?;
    }
    Ok(outcome)
}

#[derive(Serialize)]
struct Results<'a> {
    method: &'a str,
    n_particles: usize,
    mean_precision: f64,
    per_seed: &'a [f64],
    n_seeds: usize,
    n_completed: usize,
    stop_reasons: &'a std::collections::BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct Provenance {
    git_hash: String,
    package_version: &'static str,
    base_seed: u64,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    config: ExperimentConfig,
    results: Results<'a>,
    provenance: Provenance,
}

#[derive(Serialize)]
struct TimingFile {
    mean_runtime_s: f64,
    total_runtime_s: f64,
}

/// Writes `summary.json` and `per_seed.csv` (deterministic for a fixed
/// config and seed) plus `timing.json`/`timing.csv` with wall-clock data.
pub fn write_artifacts(dir: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    let cfg = &outcome.config;
    let s = &outcome.summary;
    let mut echo = cfg.clone();
    // the output location does not influence results
    echo.out = None;
    echo.workers = None;
    let file = SummaryFile {
        config: echo,
        results: Results {
            method: cfg.method.label(),
            n_particles: cfg.solver.n_particles,
            mean_precision: s.mean_precision,
            per_seed: &s.per_seed,
            n_seeds: s.n_seeds,
            n_completed: s.n_completed,
            stop_reasons: &s.stop_reasons,
        },
        provenance: Provenance {
            git_hash: git_hash(),
            package_version: env!("CARGO_PKG_VERSION"),
            base_seed: cfg.base_seed,
        },
    };
    write_json(&dir.join("summary.json"), &file)?;
    let reason = |r: StopReason| match r {
        StopReason::Converged => "converged",
        StopReason::MaxIters => "max_iters",
        StopReason::Failed => "failed",
    };
    let rows: Vec<Vec<String>> = outcome
        .replicates
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.precision.map(fmt_f64).unwrap_or_default(),
                r.iterations.to_string(),
                reason(r.stop_reason).to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join("per_seed.csv"),
        &["seed", "precision", "iterations", "stop_reason"],
        &rows,
    )?;
    let timing: Vec<Vec<String>> = outcome
        .replicates
        .iter()
        .map(|r| vec![r.seed.to_string(), fmt_f64(r.runtime_s)])
        .collect();
    write_csv(&dir.join("timing.csv"), &["seed", "runtime_s"], &timing)?;
    write_json(
        &dir.join("timing.json"),
        &TimingFile {
            mean_runtime_s: s.mean_runtime_s,
            total_runtime_s: outcome.replicates.iter().map(|r| r.runtime_s).sum(),
        },
    )
}
