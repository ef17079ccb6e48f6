//! One Euler-Maruyama step of the interacting particle system.
//!
//! Per particle `i` (in index order) the stepper draws `d` standard normals for
//! the consensus noise and, when the explicit gradient-drift variant is
//! active, `d` more for the gradient noise. No other draws are made, so a
//! replayed stream reproduces a step exactly.

use crate::consensus::{ConsensusEngine, ConsensusResult, ConsensusRule};
use crate::diffusion::DiffusionKind;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::problem::{BiLevelProblem, Manifold};
use crate::rng::RngStream;
use crate::Scalar;

use super::params::Cb2oParams;

/// Extra per-particle force driven by `grad L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientTerm<T> {
    None,
    /// `-lambda grad L dt + sigma sqrt(dt) D(grad L) B'`
    Explicit {
        lambda: T,
        sigma: T,
    },
    /// `-chi grad L` integrated linearly-implicitly:
    /// `(I + dt chi H) delta = -dt chi grad L`.
    LinearlyImplicit {
        chi: T,
    },
}

#[derive(Clone, Copy)]
pub struct StepConfig<'a, T> {
    pub lambda: T,
    pub sigma: T,
    pub dt: T,
    pub diffusion: DiffusionKind,
    pub gradient: GradientTerm<T>,
    /// Confine drift and noise to the tangent space and re-project after the step.
    pub manifold: Option<&'a dyn Manifold<T>>,
}

/// Reusable per-particle buffers.
#[derive(Debug, Default)]
pub struct Stepper<T> {
    x: Vec<T>,
    diff: Vec<T>,
    z: Vec<T>,
    drift: Vec<T>,
    noise: Vec<T>,
    grad: Vec<T>,
    gnoise: Vec<T>,
    hess: Vec<T>,
    ito: Vec<T>,
}

impl<T: Scalar> Stepper<T> {
    pub fn new(d: usize) -> Self {
        let z = || vec![T::zero(); d];
        Self {
            x: z(),
            diff: z(),
            z: z(),
            drift: z(),
            noise: z(),
            grad: z(),
            gnoise: z(),
            hess: vec![T::zero(); d * d],
            ito: z(),
        }
    }

    /// Moves every particle once towards `m`; returns `c_stop = (1/dN) sum |theta_new - m|^2`.
    pub fn update(
        &mut self,
        ens: &mut Ensemble<T>,
        m: &[T],
        problem: &BiLevelProblem<T>,
        cfg: &StepConfig<'_, T>,
        rng: &mut RngStream,
    ) -> Result<T> {
        let d = ens.dim();
        let n = ens.n_particles();
        if self.x.len() != d {
            *self = Self::new(d);
        }
        let sqrt_dt = cfg.dt.sqrt();
        let drift_scale = cfg.lambda * cfg.dt;
        let noise_scale = cfg.sigma * sqrt_dt;
        let grad_fn = match cfg.gradient {
            GradientTerm::None => None,
            _ => Some(problem.lower_grad.as_ref().ok_or_else(|| {
                Error::Config(
                    "gradient term requested but the problem has no lower-level gradient".into(),
                )
            })?),
        };
        let mut c_acc = T::zero();
        for i in 0..n {
            self.x.copy_from_slice(ens.row(i));
            for j in 0..d {
                self.diff[j] = self.x[j] - m[j];
            }
            rng.fill_gaussian(&mut self.z);
            cfg.diffusion.apply(&self.diff, &self.z, &mut self.noise);
            for j in 0..d {
                self.drift[j] = -drift_scale * self.diff[j];
                self.noise[j] = noise_scale * self.noise[j];
            }
            if let Some(mf) = cfg.manifold {
                mf.project_tangent(&self.x, &mut self.drift);
                mf.project_tangent(&self.x, &mut self.noise);
                cfg.diffusion.squared_diag(&self.diff, &mut self.z);
                mf.ito_drift(&self.x, &self.z, &mut self.ito);
                let s2dt = cfg.sigma * cfg.sigma * cfg.dt;
                for j in 0..d {
                    self.drift[j] = self.drift[j] + s2dt * self.ito[j];
                }
            }
            match cfg.gradient {
                GradientTerm::None => {
                    for j in 0..d {
                        self.grad[j] = T::zero();
                    }
                }
                GradientTerm::Explicit { lambda, sigma } => {
                    (grad_fn.unwrap())(&self.x, &mut self.grad);
                    rng.fill_gaussian(&mut self.z);
                    cfg.diffusion.apply(&self.grad, &self.z, &mut self.gnoise);
                    for j in 0..d {
                        self.grad[j] =
                            -lambda * cfg.dt * self.grad[j] + sigma * sqrt_dt * self.gnoise[j];
                    }
                }
                GradientTerm::LinearlyImplicit { chi } => {
                    (grad_fn.unwrap())(&self.x, &mut self.grad);
                    problem.lower_hessian_at(&self.x, &mut self.hess)?;
                    let h = chi * cfg.dt;
                    for r in 0..d {
                        for c in 0..d {
                            let id = if r == c { T::one() } else { T::zero() };
                            self.hess[r * d + c] = id + h * self.hess[r * d + c];
                        }
                        self.grad[r] = -h * self.grad[r];
                    }
                    if !solve_in_place(&mut self.hess, &mut self.grad, d) {
                        // singular: fall back to the explicit force
                        (grad_fn.unwrap())(&self.x, &mut self.grad);
                        self.grad.iter_mut().for_each(|g| *g = -h * *g);
                    }
                }
            }
            let row = ens.row_mut(i);
            if let Some(mf) = cfg.manifold {
                for j in 0..d {
                    row[j] = self.x[j] + self.drift[j] + self.noise[j] + self.grad[j];
                }
                mf.project(row);
            } else {
                // m + (1 - lambda dt)(theta - m): lands exactly on m when lambda dt = 1
                let keep = T::one() - drift_scale;
                for j in 0..d {
                    row[j] = m[j] + keep * self.diff[j] + self.noise[j] + self.grad[j];
                }
            }
            let mut sq = T::zero();
            for j in 0..d {
                let e = row[j] - m[j];
                sq = sq + e * e;
            }
            // a non-finite term always yields a non-finite position
            if !sq.is_finite() {
                let bad = |v: &[T]| v.iter().any(|x| !x.is_finite());
                let term = if bad(&self.drift) {
                    "drift"
                } else if bad(&self.noise) {
                    "diffusion"
                } else if bad(&self.grad) {
                    "gradient"
                } else {
                    "position"
                };
                return Err(Error::Step { particle: i, term });
            }
            c_acc = c_acc + sq;
        }
        Ok(c_acc / T::of((d * n) as f64))
    }
}

/// Solves `a x = b` (row-major `d x d`) by Gaussian elimination with partial
/// pivoting; `b` is overwritten with `x`. Returns `false` if `a` is singular.
pub(crate) fn solve_in_place<T: Scalar>(a: &mut [T], b: &mut [T], d: usize) -> bool {
    for col in 0..d {
        let mut piv = col;
        for r in (col + 1)..d {
            if a[r * d + col].abs() > a[piv * d + col].abs() {
                piv = r;
            }
        }
        let p = a[piv * d + col];
        if p == T::zero() || !p.is_finite() {
            return false;
        }
        if piv != col {
            for c in 0..d {
                a.swap(piv * d + c, col * d + c);
            }
            b.swap(piv, col);
        }
        for r in (col + 1)..d {
            let f = a[r * d + col] / a[col * d + col];
            for c in col..d {
                a[r * d + c] = a[r * d + c] - f * a[col * d + c];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    for r in (0..d).rev() {
        let mut s = b[r];
        for c in (r + 1)..d {
            s = s - a[r * d + c] * b[c];
        }
        b[r] = s / a[r * d + r];
    }
    true
}

/// Consensus rule for the given parameters and `(alpha, beta)`.
pub(crate) fn cb2o_rule<T: Scalar>(params: &Cb2oParams, alpha: f64, beta: f64) -> ConsensusRule<T> {
    match params.regularized {
        Some(r) => ConsensusRule::Regularized {
            alpha: T::of(alpha),
            beta,
            radius: T::of(r.radius),
            delta_q: T::of(r.delta_q),
        },
        None => ConsensusRule::Quantile {
            alpha: T::of(alpha),
            beta,
        },
    }
}

pub(crate) fn cb2o_gradient<T: Scalar>(params: &Cb2oParams) -> GradientTerm<T> {
    if params.lambda_grad > 0.0 || params.sigma_grad > 0.0 {
        GradientTerm::Explicit {
            lambda: T::of(params.lambda_grad),
            sigma: T::of(params.sigma_grad),
        }
    } else {
        GradientTerm::None
    }
}

/// Computes the consensus point with the CB2O rule, falling back from the
/// regularized to the plain quantile rule on an empty selection when allowed.
pub(crate) fn cb2o_consensus<'e, T: Scalar>(
    engine: &'e mut ConsensusEngine<T>,
    ens: &Ensemble<T>,
    problem: &BiLevelProblem<T>,
    params: &Cb2oParams,
    alpha: f64,
    beta: f64,
) -> Result<&'e ConsensusResult<T>> {
    let rule = cb2o_rule(params, alpha, beta);
    match engine.compute(ens, &*problem.lower, &*problem.upper, rule) {
        Err(Error::DegenerateSelection { threshold, .. })
            if params.regularized.is_some_and(|r| r.fallback) =>
        {
            log::info!(
                "regularized selection empty (threshold {threshold}); using the plain quantile rule"
            );
            engine.compute(
                ens,
                &*problem.lower,
                &*problem.upper,
                ConsensusRule::Quantile {
                    alpha: T::of(alpha),
                    beta,
                },
            )?;
            Ok(engine.result())
        }
        Err(e) => Err(e),
        Ok(_) => Ok(engine.result()),
    }
}

/// One CB2O step with the unscheduled parameters: computes the consensus point,
/// moves every particle and returns the consensus together with `c_stop`.
pub fn cb2o_step<T: Scalar>(
    ensemble: &mut Ensemble<T>,
    problem: &BiLevelProblem<T>,
    params: &Cb2oParams,
    rng: &mut RngStream,
) -> Result<(ConsensusResult<T>, T)> {
    if params.lambda_grad > 0.0 && problem.lower_grad.is_none() {
        return Err(Error::Config(
            "lambda_grad > 0 requires a lower-level gradient".into(),
        ));
    }
    let mut engine = ConsensusEngine::new();
    cb2o_consensus(
        &mut engine,
        ensemble,
        problem,
        params,
        params.alpha,
        params.beta,
    )?;
    let result = engine.into_result();
    let cfg = StepConfig {
        lambda: T::of(params.lambda),
        sigma: T::of(params.sigma),
        dt: T::of(params.dt),
        diffusion: params.diffusion,
        gradient: cb2o_gradient(params),
        manifold: None,
    };
    let c_stop =
        Stepper::new(ensemble.dim()).update(ensemble, &result.point, problem, &cfg, rng)?;
    Ok((result, c_stop))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_two_by_two() {
        let mut a = [0.0, 2.0, 3.0, 1.0];
        let mut b: [f64; 2] = [4.0, 5.0];
        assert!(solve_in_place(&mut a, &mut b, 2));
        // 2y = 4, 3x + y = 5 -> y = 2, x = 1
        assert!((b[0] - 1.0).abs() < 1e-15 && (b[1] - 2.0).abs() < 1e-15);
        let mut s = [1.0, 2.0, 2.0, 4.0];
        assert!(!solve_in_place(&mut s, &mut [1.0, 1.0], 2));
    }

    #[test]
    fn explicit_gradient_needs_grad() {
        let p = BiLevelProblem::<f64>::new(|x| x[0] * x[0], |_| 0.0);
        let params = Cb2oParams {
            n_particles: 4,
            beta: 0.5,
            lambda_grad: 1.0,
            ..Default::default()
        };
        let mut e = Ensemble::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 1.0]]).unwrap();
        assert!(cb2o_step(&mut e, &p, &params, &mut RngStream::new(0, 0)).is_err());
    }
}
