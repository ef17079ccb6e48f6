//! Quantile-based particle selection and the Gibbs-weighted consensus point.
//!
//! The consensus point averages only the `ceil(beta N)` particles with the
//! smallest lower-level values, weighting each by `exp(-alpha G)`. Ties in `L`
//! are broken by particle index, so the selected set is always exactly
//! `ceil(beta N)` particles and fully deterministic.

use std::cmp::Ordering;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::problem::BiLevelProblem;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusResult<T> {
    pub point: Vec<T>,
    /// Selected particle indices in ascending order.
    pub selected: Vec<usize>,
    /// Selection threshold: the `ceil(beta N)`-th smallest `L` value (or the
    /// smoothed threshold in regularized mode; `+inf` when every particle is used).
    pub quantile_value: T,
    /// Normalised weights aligned with `selected`.
    pub weights: Vec<T>,
}

impl<T: Scalar> ConsensusResult<T> {
    fn empty() -> Self {
        Self {
            point: Vec::new(),
            selected: Vec::new(),
            quantile_value: T::zero(),
            weights: Vec::new(),
        }
    }
}

/// How the consensus point selects and weights particles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConsensusRule<T> {
    /// The `ceil(beta N)` particles with smallest `L`.
    Quantile { alpha: T, beta: f64 },
    /// Particles in the ball `B_R(0)` whose `L` is below the smoothed quantile plus `delta_q`.
    Regularized {
        alpha: T,
        beta: f64,
        radius: T,
        delta_q: T,
    },
    /// Every particle (standard CBO); `L` is never evaluated.
    All { alpha: T },
}

/// `ceil(beta N)`, rejecting `beta` outside `(0, 1]` and selections below 2.
pub fn selection_size(beta: f64, n: usize) -> Result<usize> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!(
            "beta must lie in (0, 1], got {beta}"
        )));
    }
    // beta N is often meant to be an integer (1/20 * 100) but lands one ulp above it
    let k = ((beta * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let k = k.min(n);
    if k < 2 {
        return Err(Error::BetaTooSmall {
            beta,
            n,
            selected: k,
            beta_min: 2.0 / n as f64,
        });
    }
    Ok(k)
}

#[inline]
fn key_cmp<T: Scalar>(values: &[T], a: usize, b: usize) -> Ordering {
    values[a]
        .partial_cmp(&values[b])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

fn eval_all<T: Scalar>(ens: &Ensemble<T>, f: &dyn Fn(&[T]) -> T, out: &mut Vec<T>) -> Result<()> {
    out.clear();
    for (i, row) in ens.rows().enumerate() {
        let v = f(row);
        if !v.is_finite() {
            return Err(Error::Evaluation {
                index: i,
                value: v.as_f64(),
            });
        }
        out.push(v);
    }
    Ok(())
}

/// The `ceil(beta N)`-th smallest `L` value and the stable `L`-ascending order
/// of all particles (ties broken by index).
pub fn quantile_value<T: Scalar>(
    ensemble: &Ensemble<T>,
    lower: &dyn Fn(&[T]) -> T,
    beta: f64,
) -> Result<(T, Vec<usize>)> {
    let k = selection_size(beta, ensemble.n_particles())?;
    let mut values = Vec::with_capacity(ensemble.n_particles());
    eval_all(ensemble, lower, &mut values)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| key_cmp(&values, a, b));
    Ok((values[order[k - 1]], order))
}

/// Consensus point over the `beta`-quantile set of `problem.lower`, weighted by `exp(-alpha G)`.
pub fn consensus_point<T: Scalar>(
    ensemble: &Ensemble<T>,
    problem: &BiLevelProblem<T>,
    alpha: T,
    beta: f64,
) -> Result<ConsensusResult<T>> {
    let mut engine = ConsensusEngine::new();
    engine.compute(
        ensemble,
        &*problem.lower,
        &*problem.upper,
        ConsensusRule::Quantile { alpha, beta },
    )?;
    Ok(engine.into_result())
}

/// Consensus point over `{ |theta| <= R, L(theta) <= tau }` where `tau` is the
/// smoothed empirical quantile `(2/beta) int_{beta/2}^{beta} q_a da + delta_q`.
pub fn consensus_point_regularized<T: Scalar>(
    ensemble: &Ensemble<T>,
    problem: &BiLevelProblem<T>,
    alpha: T,
    beta: f64,
    radius: T,
    delta_q: T,
) -> Result<ConsensusResult<T>> {
    let mut engine = ConsensusEngine::new();
    engine.compute(
        ensemble,
        &*problem.lower,
        &*problem.upper,
        ConsensusRule::Regularized {
            alpha,
            beta,
            radius,
            delta_q,
        },
    )?;
    Ok(engine.into_result())
}

/// `(2/beta) int_{beta/2}^{beta} q_a da`, exact for the empirical step
/// function `q_a = L_(ceil(aN))`. `sorted` holds at least the `ceil(beta N)`
/// smallest values in ascending order.
pub fn smoothed_quantile<T: Scalar>(sorted: &[T], n: usize, beta: f64) -> T {
    let lo = beta / 2.0;
    let hi = beta;
    let nf = n as f64;
    let mut acc = 0.0;
    for (j, &v) in sorted.iter().enumerate() {
        // q_a = L_(j+1) for a in (j/N, (j+1)/N]
        let a0 = (j as f64 / nf).max(lo);
        let a1 = ((j + 1) as f64 / nf).min(hi);
        if a1 > a0 {
            acc += v.as_f64() * (a1 - a0);
        }
        if (j + 1) as f64 / nf >= hi {
            break;
        }
    }
    T::of(2.0 / beta * acc)
}

/// Reusable buffers for repeated consensus evaluations inside a solver loop.
#[derive(Debug)]
pub struct ConsensusEngine<T> {
    lvals: Vec<T>,
    idx: Vec<usize>,
    gvals: Vec<T>,
    result: ConsensusResult<T>,
}

impl<T: Scalar> Default for ConsensusEngine<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ConsensusEngine<T> {
    pub fn new() -> Self {
        Self {
            lvals: Vec::new(),
            idx: Vec::new(),
            gvals: Vec::new(),
            result: ConsensusResult::empty(),
        }
    }

    pub fn result(&self) -> &ConsensusResult<T> {
        &self.result
    }

    pub fn into_result(self) -> ConsensusResult<T> {
        self.result
    }

    pub fn compute(
        &mut self,
        ens: &Ensemble<T>,
        lower: &dyn Fn(&[T]) -> T,
        upper: &dyn Fn(&[T]) -> T,
        rule: ConsensusRule<T>,
    ) -> Result<&ConsensusResult<T>> {
        let n = ens.n_particles();
        let alpha = match rule {
            ConsensusRule::Quantile { alpha, beta } => {
                let k = selection_size(beta, n)?;
                eval_all(ens, lower, &mut self.lvals)?;
                self.idx.clear();
                self.idx.extend(0..n);
                let lv = &self.lvals;
                if k < n {
                    self.idx
                        .select_nth_unstable_by(k - 1, |&a, &b| key_cmp(lv, a, b));
                }
                let sel = &mut self.idx[..k];
                let q =
                    sel.iter()
                        .map(|&i| lv[i])
                        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
                sel.sort_unstable();
                self.result.selected.clear();
                self.result.selected.extend_from_slice(sel);
                self.result.quantile_value = q;
                alpha
            }
            ConsensusRule::Regularized {
                alpha,
                beta,
                radius,
                delta_q,
            } => {
                let k = selection_size(beta, n)?;
                if !(radius.is_finite() && radius > T::zero()) {
                    return Err(Error::Config(format!(
                        "radius R must be finite and > 0, got {radius}"
                    )));
                }
                if !(delta_q >= T::zero()) {
                    return Err(Error::Config(format!(
                        "delta_q must be >= 0, got {delta_q}"
                    )));
                }
                eval_all(ens, lower, &mut self.lvals)?;
                let mut smallest = self.lvals.clone();
                let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(Ordering::Equal);
                if k < n {
                    smallest.select_nth_unstable_by(k - 1, cmp);
                }
                smallest.truncate(k);
                smallest.sort_by(cmp);
                let tau = smoothed_quantile(&smallest, n, beta) + delta_q;
                let r2 = radius * radius;
                self.result.selected.clear();
                for (i, row) in ens.rows().enumerate() {
                    let norm2 = row.iter().map(|&x| x * x).sum::<T>();
                    if norm2 <= r2 && self.lvals[i] <= tau {
                        self.result.selected.push(i);
                    }
                }
                if self.result.selected.is_empty() {
                    return Err(Error::DegenerateSelection {
                        threshold: tau.as_f64(),
                        radius: radius.as_f64(),
                    });
                }
                self.result.quantile_value = tau;
                alpha
            }
            ConsensusRule::All { alpha } => {
                self.result.selected.clear();
                self.result.selected.extend(0..n);
                self.result.quantile_value = T::infinity();
                alpha
            }
        };
        self.weigh(ens, upper, alpha)?;
        Ok(&self.result)
    }

    fn weigh(&mut self, ens: &Ensemble<T>, upper: &dyn Fn(&[T]) -> T, alpha: T) -> Result<()> {
        if !(alpha >= T::zero()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
        }
        let res = &mut self.result;
        self.gvals.clear();
        let mut gmin = T::infinity();
        for &i in &res.selected {
            let g = upper(ens.row(i));
            if !g.is_finite() {
                return Err(Error::Evaluation {
                    index: i,
                    value: g.as_f64(),
                });
            }
            gmin = gmin.min(g);
            self.gvals.push(g);
        }
        // max-shifted exponent: the best particle has weight exactly 1
        res.weights.clear();
        let mut total = T::zero();
        for &g in &self.gvals {
            let w = (-(alpha * (g - gmin))).exp();
            total = total + w;
            res.weights.push(w);
        }
        let d = ens.dim();
        res.point.clear();
        res.point.resize(d, T::zero());
        for (w, &i) in res.weights.iter_mut().zip(&res.selected) {
            *w = *w / total;
            for (m, &x) in res.point.iter_mut().zip(ens.row(i)) {
                *m = *m + *w * x;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(rows: &[[f64; 2]]) -> Ensemble<f64> {
        Ensemble::from_rows(rows).unwrap()
    }

    fn l_from_first(x: &[f64]) -> f64 {
        x[0]
    }

    #[test]
    fn quantile_of_four() {
        let e = ens(&[[3.0, 0.0], [1.0, 0.0], [2.0, 0.0], [5.0, 0.0]]);
        let (q, order) = quantile_value(&e, &l_from_first, 0.5).unwrap();
        assert_eq!(q, 2.0);
        assert_eq!(order, vec![1, 2, 0, 3]);
    }

    #[test]
    fn quantile_constant() {
        let e = ens(&[[7.0, 0.0], [7.0, 1.0], [7.0, 2.0]]);
        let (q, order) = quantile_value(&e, &l_from_first, 1.0).unwrap();
        assert_eq!(q, 7.0);
        assert_eq!(order, vec![0, 1, 2]);
    }

    #[test]
    fn beta_min_violation_reports_two_over_n() {
        let e = ens(&[[0.0, 0.0]; 100]);
        let err = quantile_value(&e, &l_from_first, 0.009).unwrap_err();
        match err {
            Error::BetaTooSmall {
                beta_min, selected, ..
            } => {
                assert_eq!(selected, 1);
                assert!((beta_min - 0.02).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nonfinite_lower_names_particle() {
        let e = ens(&[[0.0, 0.0], [f64::MAX, 0.0], [1.0, 0.0]]);
        let err = quantile_value(&e, &|x: &[f64]| x[0] * x[0], 1.0).unwrap_err();
        assert!(matches!(err, Error::Evaluation { index: 1, .. }), "{err:?}");
    }

    #[test]
    fn selection_size_rounding() {
        assert_eq!(selection_size(1.0 / 20.0, 100).unwrap(), 5);
        assert_eq!(selection_size(1.0 / 30.0, 1500).unwrap(), 50);
        assert_eq!(selection_size(1.0 / 40.0, 2000).unwrap(), 50);
        assert_eq!(selection_size(0.37, 100).unwrap(), 37);
        assert_eq!(selection_size(0.021, 100).unwrap(), 3);
        assert!(selection_size(0.0, 10).is_err());
        assert!(selection_size(1.5, 10).is_err());
    }

    #[test]
    fn ties_at_boundary_select_lower_index() {
        let e = ens(&[[1.0, 0.0], [0.0, 0.0], [1.0, 5.0], [1.0, 9.0]]);
        let p = BiLevelProblem::new(l_from_first, |_: &[f64]| 0.0);
        let r = consensus_point(&e, &p, 1.0, 0.5).unwrap();
        assert_eq!(r.selected, vec![0, 1]);
    }

    #[test]
    fn midpoint_of_two() {
        let e = ens(&[[0.0, 0.0], [2.0, 4.0]]);
        let p = BiLevelProblem::new(|_: &[f64]| 0.0, |_: &[f64]| 1.0);
        let r = consensus_point(&e, &p, 5.0, 1.0).unwrap();
        assert_eq!(r.point, vec![1.0, 2.0]);
    }

    #[test]
    fn all_rule_ignores_lower() {
        let e = ens(&[[0.0, 0.0], [2.0, 4.0], [4.0, 2.0]]);
        let mut eng = ConsensusEngine::new();
        let r = eng
            .compute(
                &e,
                &|_: &[f64]| panic!("lower evaluated"),
                &|_: &[f64]| 0.0,
                ConsensusRule::All { alpha: 1.0 },
            )
            .unwrap();
        assert_eq!(r.selected, vec![0, 1, 2]);
        assert_eq!(r.point, vec![2.0, 2.0]);
        assert!(r.quantile_value.is_infinite());
    }

    #[test]
    fn smoothed_quantile_step_function() {
        // N = 10, beta = 0.4: a in [0.2, 0.4] covers order stats 3 and 4 equally
        let sorted: [f64; 4] = [1.0, 2.0, 3.0, 5.0];
        let v = smoothed_quantile(&sorted, 10, 0.4);
        assert!((v - 4.0).abs() < 1e-12, "{v}");
        // beta = 0.3: a in [0.15, 0.3] -> stat 2 on (0.15,0.2], stat 3 on (0.2,0.3]
        let v = smoothed_quantile(&sorted[..3], 10, 0.3);
        let expect = 2.0 / 0.3 * (2.0 * 0.05 + 3.0 * 0.1);
        assert!((v - expect).abs() < 1e-12, "{v}");
    }

    #[test]
    fn regularized_empty_selection_errors() {
        let e = ens(&[[5.0, 0.0], [6.0, 0.0]]);
        let p = BiLevelProblem::new(l_from_first, |_: &[f64]| 0.0);
        let err = consensus_point_regularized(&e, &p, 1.0, 1.0, 1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateSelection { .. }));
    }

    #[test]
    fn f32_consensus() {
        let e = Ensemble::<f32>::from_rows(&[[0.0f32, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        let p = BiLevelProblem::new(|x: &[f32]| x[0], |_: &[f32]| 0.0f32);
        let r = consensus_point(&e, &p, 1.0f32, 2.0 / 3.0).unwrap();
        assert_eq!(r.point, vec![0.5f32, 0.5]);
    }
}
