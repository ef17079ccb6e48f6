use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::StopReason;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::Scalar;

/// Euclidean distance between the returned point and the target minimiser.
pub fn precision<T: Scalar>(point: &[T], theta_good: &[T]) -> T {
    assert_eq!(point.len(), theta_good.len(), "dimension mismatch");
    point
        .iter()
        .zip(theta_good)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt()
}

/// Squared 2-Wasserstein distance between the empirical measure of the
/// ensemble and a Dirac at `theta`: `(1/N) sum |theta_i - theta|^2`.
pub fn w2sq_to_dirac<T: Scalar>(ensemble: &Ensemble<T>, theta: &[T]) -> T {
    assert_eq!(ensemble.dim(), theta.len(), "dimension mismatch");
    let s = ensemble
        .rows()
        .map(|row| {
            row.iter()
                .zip(theta)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<T>()
        })
        .sum::<T>();
    s / T::of(ensemble.n_particles() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub r_squared: f64,
}

/// Least-squares slope of `ln V` against `t`.
pub fn fit_decay_rate(samples: &[(f64, f64)]) -> Result<DecayFit> {
    if samples.len() < 10 {
        return Err(Error::Window(format!(
            "need at least 10 samples, got {}",
            samples.len()
        )));
    }
    if let Some((t, v)) = samples.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Window(format!("V({t}) = {v} is not positive")));
    }
    let n = samples.len() as f64;
    let mt = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1.ln()).sum::<f64>() / n;
    let (mut sty, mut stt, mut syy) = (0.0, 0.0, 0.0);
    for &(t, v) in samples {
        let (dt, dy) = (t - mt, v.ln() - my);
        sty += dt * dy;
        stt += dt * dt;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(Error::Window("all samples share one time".into()));
    }
    let rate = sty / stt;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sty * sty) / (stt * syy)
    };
    Ok(DecayFit { rate, r_squared })
}

/// Decay-fit window `[start, end)` into `series`: from the first sample with
/// `V <= V(0)/2` to the first with `V <= max(10 * floor, 1e-6 V(0))`, where the
/// noise floor is the median `V` over the final 10% of the series.
pub fn decay_window(series: &[(f64, f64)]) -> Result<(usize, usize)> {
    if series.len() < 10 {
        return Err(Error::Window("series shorter than 10 samples".into()));
    }
    let v0 = series[0].1;
    let tail_start = series.len() - (series.len() / 10).max(1);
    let mut tail: Vec<f64> = series[tail_start..].iter().map(|s| s.1).collect();
    tail.sort_by(f64::total_cmp);
    let floor = tail[tail.len() / 2];
    let stop_level = (10.0 * floor).max(1e-6 * v0);
    let start = series
        .iter()
        .position(|s| s.1 <= 0.5 * v0)
        .ok_or_else(|| Error::Window("V never halves".into()))?;
    let end = series[start..]
        .iter()
        .position(|s| s.1 <= stop_level)
        .map(|p| p + start)
        .unwrap_or(series.len());
    if end - start < 10 {
        return Err(Error::Window(format!(
            "window [{start}, {end}) has fewer than 10 samples"
        )));
    }
    Ok((start, end))
}

/// Fits the decay rate on the automatically selected window.
pub fn fit_decay_on_window(series: &[(f64, f64)]) -> Result<(DecayFit, (usize, usize))> {
    let (s, e) = decay_window(series)?;
    Ok((fit_decay_rate(&series[s..e])?, (s, e)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSummary {
    pub mean_precision: f64,
    pub per_seed: Vec<f64>,
    pub n_seeds: usize,
    /// Replicates that finished without error.
    pub n_completed: usize,
    /// Mean wall-clock seconds per replicate.
    pub mean_runtime_s: f64,
    pub stop_reasons: BTreeMap<String, usize>,
}

impl PrecisionSummary {
    /// Aggregates per-replicate `(precision, runtime, stop reason)`; failed
    /// replicates (`None` precision) are excluded from the means.
    pub fn from_replicates(reps: &[(Option<f64>, f64, StopReason)]) -> Self {
        let per_seed: Vec<f64> = reps.iter().filter_map(|r| r.0).collect();
        let mut stop_reasons = BTreeMap::new();
        for r in reps {
            let key = serde_json::to_value(r.2)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            *stop_reasons.entry(key).or_insert(0) += 1;
        }
        let mean = |xs: &[f64]| {
            if xs.is_empty() {
                f64::NAN
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        let runtimes: Vec<f64> = reps.iter().map(|r| r.1).collect();
        Self {
            mean_precision: mean(&per_seed),
            n_completed: per_seed.len(),
            per_seed,
            n_seeds: reps.len(),
            mean_runtime_s: mean(&runtimes),
            stop_reasons,
        }
    }
}
