//! Two-circle counterexample: the consensus point is not Lipschitz in `W_2`.
//!
//! Mass sits equally on circles of radius 1 and `1 + gap`. With `L = G = |x|`
//! and `beta < 1/2` the smoothed quantile equals the inner radius, so choosing
//! `delta_q = gap` admits the whole outer circle. Shifting its right half by
//! `s` pushes that quarter of the mass above the threshold, dropping it from
//! the selection and moving the consensus point by an amount that does not
//! shrink with `s`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::consensus::consensus_point_regularized;
use crate::ensemble::Ensemble;
use crate::error::Result;
use crate::problem::BiLevelProblem;

pub const INNER_RADIUS: f64 = 1.0;
pub const OUTER_RADIUS: f64 = 1.1;
/// Absorbs rounding in `|x|` for points on the outer circle.
const THRESHOLD_SLACK: f64 = 1e-12;
/// Ball radius; large enough to contain every point of both measures.
const BALL_RADIUS: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilityResult {
    pub s: f64,
    pub w2: f64,
    pub consensus_gap: f64,
}

/// Points `(j + 1/2) 2 pi / M` on the inner then outer circle, with the
/// `x > 0` half of the outer circle shifted right by `shift`.
pub fn two_circle_measure(m: usize, shift: f64) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(2 * m);
    for r in [INNER_RADIUS, OUTER_RADIUS] {
        for j in 0..m {
            let phi = (j as f64 + 0.5) * TAU / m as f64;
            let (x, y) = (r * phi.cos(), r * phi.sin());
            let dx = if r == OUTER_RADIUS && x > 0.0 {
                shift
            } else {
                0.0
            };
            pts.push([x + dx, y]);
        }
    }
    pts
}

/// Transport cost of the index-wise coupling between two equally weighted
/// clouds of the same size. An upper bound on `W_2`, attained by the shifted
/// two-circle pair.
pub fn coupled_w2(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let sq: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
        .sum();
    (sq / a.len() as f64).sqrt()
}

fn norm_problem() -> BiLevelProblem<f64> {
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    BiLevelProblem::new(norm, norm).with_dim(2)
}

/// Runs the construction with `m` points per circle.
pub fn wasserstein_instability_demo_with(
    s: f64,
    alpha: f64,
    beta: f64,
    m: usize,
) -> Result<InstabilityResult> {
    let problem = norm_problem();
    let base = two_circle_measure(m, 0.0);
    let shifted = two_circle_measure(m, s);
    let delta_q = OUTER_RADIUS - INNER_RADIUS + THRESHOLD_SLACK;
    let point = |pts: &[[f64; 2]]| -> Result<Vec<f64>> {
        let ens = Ensemble::from_rows(pts)?;
        Ok(consensus_point_regularized(&ens, &problem, alpha, beta, BALL_RADIUS, delta_q)?.point)
    };
    let (m0, m1) = (point(&base)?, point(&shifted)?);
    let gap = ((m0[0] - m1[0]).powi(2) + (m0[1] - m1[1]).powi(2)).sqrt();
    Ok(InstabilityResult {
        s,
        w2: coupled_w2(&base, &shifted),
        consensus_gap: gap,
    })
}

/// Default construction: 2000 points per circle.
pub fn wasserstein_instability_demo(s: f64, alpha: f64, beta: f64) -> Result<InstabilityResult> {
    wasserstein_instability_demo_with(s, alpha, beta, 2000)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unshifted_measure_is_centred() {
        let r = wasserstein_instability_demo_with(0.0, 30.0, 0.3, 400).unwrap();
        assert_eq!(r.w2, 0.0);
        assert!(r.consensus_gap < 1e-12);
    }

    #[test]
    fn gap_independent_of_shift() {
        let a = wasserstein_instability_demo_with(0.1, 30.0, 0.3, 400).unwrap();
        let b = wasserstein_instability_demo_with(0.01, 30.0, 0.3, 400).unwrap();
        assert!((a.w2 - 0.05).abs() < 1e-12);
        assert!((b.w2 - 0.005).abs() < 1e-12);
        assert!(a.consensus_gap > 0.01, "{}", a.consensus_gap);
        assert!((a.consensus_gap - b.consensus_gap).abs() < 1e-12);
    }

    #[test]
    fn quarter_of_mass_moves() {
        let pts = two_circle_measure(400, 0.3);
        let base = two_circle_measure(400, 0.0);
        let moved = pts.iter().zip(&base).filter(|(a, b)| a != b).count();
        assert_eq!(moved, 200);
    }
}
