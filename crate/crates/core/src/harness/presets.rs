//! Preset experiments: the four constrained-Ackley comparisons and the
//! ablation panels around the reference setting `N = 1000, beta = 1/20,
//! alpha = 30, eps_stop = 0`.

use serde::{Deserialize, Serialize};

use super::ablation::{AblationAxis, AblationGrid};
use super::config::{ExperimentConfig, Solver};
use crate::baselines::BaselineKind;
use crate::dynamics::Cb2oParams;
use crate::error::{Error, Result};

/// Penalty weight of the penalized and gradient-force baselines.
pub const CHI: f64 = 100.0;
/// Stopping threshold of the star benchmark (the circle runs to `max_iters`).
pub const STAR_EPS_STOP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    /// Every solver uses `N = 100`.
    SameParticles,
    /// Per-solver particle counts chosen for comparable wall-clock time.
    SameTime,
}

impl std::str::FromStr for CompareMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "same_particles" => Ok(CompareMode::SameParticles),
            "same_time" => Ok(CompareMode::SameTime),
            _ => Err(Error::Config(format!(
                "unknown compare mode `{s}` (expected same-particles or same-time)"
            ))),
        }
    }
}

fn adaptive(chi0: f64, eta_chi: f64) -> Solver {
    Solver::Baseline(BaselineKind::AdaptivePenalizedCbo {
        chi0,
        eta_chi,
        zeta0: 0.1,
        eta_zeta: 1.4,
    })
}

fn entry(benchmark: &str, method: Solver, n: usize, beta: f64, eps_stop: f64) -> ExperimentConfig {
    let solver = Cb2oParams {
        n_particles: n,
        beta,
        eps_stop,
        ..Cb2oParams::default()
    };
    ExperimentConfig::new(benchmark, method, solver)
}

/// Solver line-up for a benchmark comparison. Projected CBO is left out on
/// the star benchmark, which has no closed-form projection.
pub fn comparison(benchmark: &str, mode: CompareMode) -> Result<Vec<ExperimentConfig>> {
    let pen = Solver::Baseline(BaselineKind::PenalizedCbo { chi: CHI });
    let gf = Solver::Baseline(BaselineKind::CboGradientForce { chi: CHI });
    let proj = Solver::Baseline(BaselineKind::ProjectedCbo);
    let b = benchmark;
    let beta20 = 1.0 / 20.0;
    let list = match (benchmark, mode) {
        ("ackley-circle", CompareMode::SameParticles) => vec![
            entry(b, pen, 100, beta20, 0.0),
            entry(b, adaptive(1.0, 1.1), 100, beta20, 0.0),
            entry(b, gf, 100, beta20, 0.0),
            entry(b, proj, 100, beta20, 0.0),
            entry(b, Solver::Cb2o, 100, beta20, 0.0),
        ],
        ("ackley-circle", CompareMode::SameTime) => vec![
            entry(b, pen, 500, beta20, 0.0),
            entry(b, adaptive(10.0, 1.05), 500, beta20, 0.0),
            entry(b, gf, 50, beta20, 0.0),
            entry(b, proj, 80, beta20, 0.0),
            entry(b, Solver::Cb2o, 1500, 1.0 / 30.0, 0.0),
        ],
        ("ackley-star", CompareMode::SameParticles) => vec![
            entry(b, pen, 100, beta20, STAR_EPS_STOP),
            entry(b, adaptive(1.0, 1.1), 100, beta20, STAR_EPS_STOP),
            entry(b, gf, 100, beta20, STAR_EPS_STOP),
            entry(b, Solver::Cb2o, 100, beta20, STAR_EPS_STOP),
        ],
        ("ackley-star", CompareMode::SameTime) => vec![
            entry(b, pen, 500, beta20, STAR_EPS_STOP),
            entry(b, adaptive(50.0, 1.05), 500, beta20, STAR_EPS_STOP),
            entry(b, gf, 500, beta20, STAR_EPS_STOP),
            entry(b, Solver::Cb2o, 2000, 1.0 / 40.0, STAR_EPS_STOP),
        ],
        (other, _) => return Err(Error::Config(format!(
            "no comparison preset for benchmark `{other}` (available: ackley-circle, ackley-star)"
        ))),
    };
    Ok(list)
}

/// The CB2O row of a comparison preset.
pub fn cb2o_preset(benchmark: &str, mode: CompareMode) -> Result<ExperimentConfig> {
    Ok(comparison(benchmark, mode)?
        .into_iter()
        .find(|c| c.method == Solver::Cb2o)
        .expect("every comparison includes CB2O"))
}

/// Reference hyperparameters of the ablation study.
pub fn ablation_reference() -> Cb2oParams {
    Cb2oParams {
        n_particles: 1000,
        beta: 1.0 / 20.0,
        alpha: 30.0,
        eps_stop: 0.0,
        ..Cb2oParams::default()
    }
}

pub const ABLATION_PANELS: [&str; 7] = [
    "n",
    "beta",
    "joint_n_beta",
    "alpha",
    "eps_stop",
    "beta_n500",
    "beta_n2000",
];

const BETA_GRID: [f64; 7] = [
    1.0 / 500.0,
    1.0 / 100.0,
    1.0 / 50.0,
    1.0 / 20.0,
    1.0 / 10.0,
    1.0 / 5.0,
    1.0 / 2.0,
];

/// Ablation panel by name (see [`ABLATION_PANELS`]) on the circle benchmark.
pub fn ablation(panel: &str) -> Result<AblationGrid> {
    let grid = |axis, values: &[f64]| {
        AblationGrid::new("ackley-circle", ablation_reference(), axis, values.to_vec())
    };
    Ok(match panel {
        "n" => grid(AblationAxis::N, &[1e2, 1e3, 1e4, 1e5]),
        "beta" => grid(AblationAxis::Beta, &BETA_GRID),
        "joint_n_beta" => AblationGrid {
            beta_times_n: Some(50.0),
            ..grid(AblationAxis::JointNBeta, &[1e2, 1e3, 1e4, 1e5])
        },
        "alpha" => grid(AblationAxis::Alpha, &[2.0, 10.0, 30.0, 50.0, 100.0]),
        "eps_stop" => grid(AblationAxis::EpsStop, &[0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1]),
        "beta_n500" | "beta_n2000" => {
            let n = if panel == "beta_n500" { 500 } else { 2000 };
            // smallest quantile selects two particles, as 1/500 does at N = 1000
            let mut values = BETA_GRID.to_vec();
            values[0] = 2.0 / n as f64;
            let mut g = grid(AblationAxis::Beta, &values);
            g.reference.n_particles = n;
            g
        }
        other => {
            return Err(Error::Config(format!(
                "unknown ablation panel `{other}` (available: {})",
                ABLATION_PANELS.join(", ")
            )))
        }
    })
}

fn short_name(method: &Solver) -> &'static str {
    match method {
        Solver::Cb2o => "cb2o",
        Solver::Baseline(BaselineKind::PenalizedCbo { .. }) => "penalized",
        Solver::Baseline(BaselineKind::AdaptivePenalizedCbo { .. }) => "adaptive",
        Solver::Baseline(BaselineKind::CboGradientForce { .. }) => "gf",
        Solver::Baseline(BaselineKind::ProjectedCbo) => "projected",
    }
}

/// Every preset as `(path relative to the config root, JSON)`: one file per
/// comparison row under `tables/` and one grid per panel under `ablation/`.
pub fn shipped_presets() -> Result<Vec<(String, serde_json::Value)>> {
    let mut out = Vec::new();
    let tables = [
        ("table1", "ackley-circle", CompareMode::SameParticles),
        ("table2", "ackley-circle", CompareMode::SameTime),
        ("table3", "ackley-star", CompareMode::SameParticles),
        ("table4", "ackley-star", CompareMode::SameTime),
    ];
    for (table, bench, mode) in tables {
        for cfg in comparison(bench, mode)? {
            let path = format!("tables/{table}_{}.json", short_name(&cfg.method));
            out.push((path, serde_json::to_value(&cfg)?));
        }
    }
    for panel in ABLATION_PANELS {
        out.push((
            format!("ablation/{panel}.json"),
            serde_json::to_value(ablation(panel)?)?,
        ));
    }
    Ok(out)
}
