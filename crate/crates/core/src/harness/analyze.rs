//! Diagnostics beyond precision tables: the variance decay rate on a
//! quadratic problem, the Wasserstein instability sweep, and the Laplace and
//! quantile trends on the Himmelblau demo.

use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusEngine, ConsensusRule};
use crate::diffusion::DiffusionKind;
use crate::dynamics::{cb2o_step, Cb2oParams};
use crate::ensemble::{init_ensemble, Ensemble, InitSpec};
use crate::error::{Error, Result};
use crate::instability::{wasserstein_instability_demo_with, InstabilityResult};
use crate::metrics::{decay_window, fit_decay_rate, w2sq_to_dirac, DecayFit};
use crate::problem::BiLevelProblem;
use crate::problems::{himmelblau_demo, HIMMELBLAU_MINIMIZERS};
use crate::rng::RngStream;

/// Quadratic `L = |theta - target|^2`, `G = 0`, isotropic noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub n_particles: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub target: Vec<f64>,
    pub init: InitSpec,
    pub seed: u64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            n_particles: 10_000,
            lambda: 1.0,
            sigma: 0.3,
            alpha: 1e4,
            beta: 0.02,
            dt: 1e-3,
            t_end: 10.0,
            target: vec![1.0, -0.5],
            init: InitSpec::standard_gaussian(),
            seed: 0,
        }
    }
}

impl DecayConfig {
    /// `-(2 lambda - d sigma^2)`.
    pub fn predicted_rate(&self) -> f64 {
        -(2.0 * self.lambda - self.target.len() as f64 * self.sigma * self.sigma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub fitted_rate: f64,
    pub r_squared: f64,
    pub predicted_rate: f64,
    /// `|fitted - predicted| / |predicted|`.
    pub relative_error: f64,
    /// Fit window in simulated time.
    pub window: (f64, f64),
    /// `(t, V(t))` with `V = (1/N) sum |theta_i - target|^2`.
    pub series: Vec<(f64, f64)>,
}

/// Simulates the quadratic problem and fits the decay rate of `V` on the
/// automatically selected window.
pub fn analyze_decay(cfg: &DecayConfig) -> Result<DecayReport> {
    let d = cfg.target.len();
    if d == 0 {
        return Err(Error::Config("decay target must be non-empty".into()));
    }
    let target = cfg.target.clone();
    let problem = BiLevelProblem::new(
        move |x: &[f64]| x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum(),
        |_: &[f64]| 0.0,
    )
    .with_dim(d);
    let params = Cb2oParams {
        n_particles: cfg.n_particles,
        lambda: cfg.lambda,
        sigma: cfg.sigma,
        alpha: cfg.alpha,
        beta: cfg.beta,
        dt: cfg.dt,
        diffusion: DiffusionKind::Isotropic,
        ..Cb2oParams::default()
    };
    params.validate()?;
    let mut rng = RngStream::new(cfg.seed, 0);
    let mut ens: Ensemble<f64> = init_ensemble(cfg.n_particles, d, &cfg.init, &mut rng)?;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let mut series = Vec::with_capacity(steps + 1);
    series.push((0.0, w2sq_to_dirac(&ens, &cfg.target)));
    for k in 1..=steps {
        cb2o_step(&mut ens, &problem, &params, &mut rng)?;
        series.push((k as f64 * cfg.dt, w2sq_to_dirac(&ens, &cfg.target)));
    }
    let (a, b) = decay_window(&series)?;
    let DecayFit { rate, r_squared } = fit_decay_rate(&series[a..b])?;
    let predicted = cfg.predicted_rate();
    Ok(DecayReport {
        fitted_rate: rate,
        r_squared,
        predicted_rate: predicted,
        relative_error: ((rate - predicted) / predicted).abs(),
        window: (series[a].0, series[b - 1].0),
        series,
    })
}

/// Instability construction for every shift in `s_values`.
pub fn instability_sweep(
    s_values: &[f64],
    alpha: f64,
    beta: f64,
    points_per_circle: usize,
) -> Result<Vec<InstabilityResult>> {
    s_values
        .iter()
        .map(|&s| {
            if !(s > 0.0) {
                return Err(Error::Config(format!("shift s must be > 0, got {s}")));
            }
            wasserstein_instability_demo_with(s, alpha, beta, points_per_circle)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaTrendRow {
    pub alpha: f64,
    /// `|m - argmin_{selected} G|`.
    pub distance_to_best: f64,
    pub distance_to_theta_good: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaTrendRow {
    pub beta: f64,
    pub selected: usize,
    /// Largest distance from a selected particle to the nearest lower-level minimiser.
    pub max_distance_to_minimisers: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LaplaceTrend {
    pub alpha_rows: Vec<AlphaTrendRow>,
    pub beta_rows: Vec<BetaTrendRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceTrendConfig {
    pub n_particles: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    /// Quantile used for the `alpha` sweep.
    pub beta_for_alpha: f64,
    pub betas: Vec<f64>,
}

impl Default for LaplaceTrendConfig {
    fn default() -> Self {
        Self {
            n_particles: 10_000,
            seed: 0,
            alphas: vec![1.0, 10.0, 100.0, 1e4],
            beta_for_alpha: 0.02,
            betas: vec![0.5, 0.25, 0.1, 0.02],
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Consensus trends on one fixed uniform ensemble over the demo box.
pub fn laplace_trend(cfg: &LaplaceTrendConfig) -> Result<LaplaceTrend> {
    let spec = himmelblau_demo::<f64>();
    let mut rng = RngStream::new(cfg.seed, 0);
    let ens: Ensemble<f64> = init_ensemble(cfg.n_particles, 2, &spec.default_init, &mut rng)?;
    let p = &spec.problem;
    let good = p.theta_good.clone().expect("demo has a known solution");
    let mut engine = ConsensusEngine::new();
    let mut alpha_rows = Vec::new();
    for &alpha in &cfg.alphas {
        let r = engine.compute(
            &ens,
            &*p.lower,
            &*p.upper,
            ConsensusRule::Quantile {
                alpha,
                beta: cfg.beta_for_alpha,
            },
        )?;
        let best = r
            .selected
            .iter()
            .copied()
            .min_by(|&a, &b| p.upper(ens.row(a)).total_cmp(&p.upper(ens.row(b))))
            .expect("selection is non-empty");
        alpha_rows.push(AlphaTrendRow {
            alpha,
            distance_to_best: dist(&r.point, ens.row(best)),
            distance_to_theta_good: dist(&r.point, &good),
        });
    }
    let mut beta_rows = Vec::new();
    for &beta in &cfg.betas {
        let r = engine.compute(
            &ens,
            &*p.lower,
            &*p.upper,
            ConsensusRule::Quantile { alpha: 1.0, beta },
        )?;
        let spread = r
            .selected
            .iter()
            .map(|&i| {
                HIMMELBLAU_MINIMIZERS
                    .iter()
                    .map(|m| dist(ens.row(i), m))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        beta_rows.push(BetaTrendRow {
            beta,
            selected: r.selected.len(),
            max_distance_to_minimisers: spread,
        });
    }
    Ok(LaplaceTrend {
        alpha_rows,
        beta_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicted_rate() {
        assert!((DecayConfig::default().predicted_rate() + 1.82).abs() < 1e-12);
    }

    #[test]
    fn small_decay_run() {
        let cfg = DecayConfig {
            n_particles: 2000,
            beta: 0.05,
            t_end: 6.0,
            dt: 1e-2,
            ..DecayConfig::default()
        };
        let r = analyze_decay(&cfg).unwrap();
        assert!(r.fitted_rate < 0.0);
        assert!(
            r.relative_error < 0.5,
            "{r:?}",
            r = (r.fitted_rate, r.window)
        );
    }

    #[test]
    fn instability_rejects_nonpositive_shift() {
        assert!(instability_sweep(&[0.0], 30.0, 0.3, 100).is_err());
    }

    #[test]
    fn trends_on_small_ensemble() {
        let t = laplace_trend(&LaplaceTrendConfig {
            n_particles: 4000,
            ..LaplaceTrendConfig::default()
        })
        .unwrap();
        for w in t.alpha_rows.windows(2) {
            assert!(w[1].distance_to_best <= w[0].distance_to_best + 1e-12);
        }
        for w in t.beta_rows.windows(2) {
            assert!(w[1].max_distance_to_minimisers <= w[0].max_distance_to_minimisers + 1e-12);
        }
    }
}
