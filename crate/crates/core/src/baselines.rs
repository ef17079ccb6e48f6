//! Constrained CBO baselines: penalized, adaptive penalized, gradient force
//! and projected CBO. All of them form the consensus over every particle
//! (no quantile selection) and share the CB2O particle loop.

use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusEngine, ConsensusResult, ConsensusRule};
use crate::dynamics::{
    drive, Cb2oParams, Effective, GradientTerm, Method, PenaltyState, RunOptions, RunTrace,
    StaticProblem, StepConfig,
};
use crate::ensemble::{Ensemble, InitSpec};
use crate::error::{Error, Result};
use crate::problem::BiLevelProblem;
use crate::Scalar;

/// Upper bound on the adaptive penalty parameters; keeps `chi L` finite.
pub const PENALTY_CAP: f64 = 1e150;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineKind {
    /// Standard CBO on `chi L + G`.
    PenalizedCbo { chi: f64 },
    /// Standard CBO on `chi_k L + G` with `chi_k` raised whenever the
    /// violation exceeds the tolerance `1/sqrt(zeta_k)`, and `zeta_k` raised otherwise.
    AdaptivePenalizedCbo {
        chi0: f64,
        eta_chi: f64,
        zeta0: f64,
        eta_zeta: f64,
    },
    /// Standard CBO on `G` plus the force `-chi grad L`.
    CboGradientForce { chi: f64 },
    /// Standard CBO on `G` restricted to the constraint manifold.
    ProjectedCbo,
}

impl BaselineKind {
    pub fn label(&self) -> &'static str {
        match self {
            BaselineKind::PenalizedCbo { .. } => "Penalized CBO",
            BaselineKind::AdaptivePenalizedCbo { .. } => "Adaptive Penalized CBO",
            BaselineKind::CboGradientForce { .. } => "CBO with GF",
            BaselineKind::ProjectedCbo => "Projected CBO",
        }
    }

    pub fn validate<T: Scalar>(&self, problem: &BiLevelProblem<T>) -> Result<()> {
        match *self {
            BaselineKind::PenalizedCbo { chi } => {
                if !(chi >= 0.0 && chi.is_finite()) {
                    return Err(Error::Config(format!(
                        "chi must be finite and >= 0, got {chi}"
                    )));
                }
            }
            BaselineKind::AdaptivePenalizedCbo {
                chi0,
                eta_chi,
                zeta0,
                eta_zeta,
            } => {
                if !(chi0 > 0.0 && zeta0 > 0.0 && eta_chi > 1.0 && eta_zeta > 1.0) {
                    return Err(Error::Config(format!(
                        "adaptive penalty needs chi0 > 0, zeta0 > 0, eta_chi > 1, eta_zeta > 1 \
                         (got {chi0}, {zeta0}, {eta_chi}, {eta_zeta})"
                    )));
                }
            }
            BaselineKind::CboGradientForce { chi } => {
                if !(chi >= 0.0 && chi.is_finite()) {
                    return Err(Error::Config(format!(
                        "chi must be finite and >= 0, got {chi}"
                    )));
                }
                if problem.lower_grad.is_none() {
                    return Err(Error::Config(
                        "CBO with gradient force needs the lower-level gradient".into(),
                    ));
                }
            }
            BaselineKind::ProjectedCbo => {
                if problem.manifold.is_none() {
                    return Err(Error::Config(
                        "projected CBO needs a constraint projector; none is available for this problem"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Adaptive penalty update: `zeta *= eta_zeta` when `violation < 1/sqrt(zeta)`,
/// otherwise `chi *= eta_chi`. Both are capped at [`PENALTY_CAP`].
pub fn adapt_penalty(
    chi: f64,
    zeta: f64,
    violation: f64,
    eta_chi: f64,
    eta_zeta: f64,
) -> (f64, f64) {
    if violation < 1.0 / zeta.sqrt() {
        (chi, (zeta * eta_zeta).min(PENALTY_CAP))
    } else {
        ((chi * eta_chi).min(PENALTY_CAP), zeta)
    }
}

struct Baseline {
    kind: BaselineKind,
    chi: f64,
    zeta: f64,
}

impl Baseline {
    fn new(kind: BaselineKind) -> Self {
        let (chi, zeta) = match kind {
            BaselineKind::PenalizedCbo { chi } | BaselineKind::CboGradientForce { chi } => {
                (chi, 0.0)
            }
            BaselineKind::AdaptivePenalizedCbo { chi0, zeta0, .. } => (chi0, zeta0),
            BaselineKind::ProjectedCbo => (0.0, 0.0),
        };
        Self { kind, chi, zeta }
    }
}

impl<T: Scalar> Method<T> for Baseline {
    fn name(&self) -> &'static str {
        match self.kind {
            BaselineKind::PenalizedCbo { .. } => "penalized_cbo",
            BaselineKind::AdaptivePenalizedCbo { .. } => "adaptive_penalized_cbo",
            BaselineKind::CboGradientForce { .. } => "cbo_gradient_force",
            BaselineKind::ProjectedCbo => "projected_cbo",
        }
    }

    fn validate(&self, _params: &Cb2oParams, problem: &BiLevelProblem<T>) -> Result<()> {
        self.kind.validate(problem)
    }

    fn prepare(&mut self, ens: &mut Ensemble<T>, problem: &BiLevelProblem<T>) {
        if let (BaselineKind::ProjectedCbo, Some(mf)) = (self.kind, &problem.manifold) {
            for i in 0..ens.n_particles() {
                mf.project(ens.row_mut(i));
            }
        }
    }

    fn consensus<'e>(
        &mut self,
        engine: &'e mut ConsensusEngine<T>,
        ens: &Ensemble<T>,
        problem: &BiLevelProblem<T>,
        _params: &Cb2oParams,
        eff: Effective,
    ) -> Result<&'e ConsensusResult<T>> {
        let rule = ConsensusRule::All {
            alpha: T::of(eff.alpha),
        };
        let unused = |_: &[T]| T::zero();
        match self.kind {
            BaselineKind::PenalizedCbo { .. } | BaselineKind::AdaptivePenalizedCbo { .. } => {
                let chi = T::of(self.chi);
                let objective = |x: &[T]| chi * problem.lower(x) + problem.upper(x);
                engine.compute(ens, &unused, &objective, rule)
            }
            BaselineKind::CboGradientForce { .. } | BaselineKind::ProjectedCbo => {
                engine.compute(ens, &unused, &*problem.upper, rule)
            }
        }
    }

    fn step_config<'a>(
        &self,
        problem: &'a BiLevelProblem<T>,
        params: &Cb2oParams,
        eff: Effective,
    ) -> StepConfig<'a, T> {
        let (gradient, manifold) = match self.kind {
            BaselineKind::CboGradientForce { chi } => {
                (GradientTerm::LinearlyImplicit { chi: T::of(chi) }, None)
            }
            BaselineKind::ProjectedCbo => (GradientTerm::None, problem.manifold.as_deref()),
            _ => (GradientTerm::None, None),
        };
        StepConfig {
            lambda: T::of(params.lambda),
            sigma: T::of(eff.sigma),
            dt: T::of(params.dt),
            diffusion: params.diffusion,
            gradient,
            manifold,
        }
    }

    fn after_step(&mut self, m: &[T], problem: &BiLevelProblem<T>) -> Option<PenaltyState> {
        let BaselineKind::AdaptivePenalizedCbo {
            eta_chi, eta_zeta, ..
        } = self.kind
        else {
            return None;
        };
        // constraint residual at the consensus point: sqrt(sum g_i^2) = sqrt(L)
        let violation = problem.lower(m).as_f64().max(0.0).sqrt();
        let (chi, zeta) = adapt_penalty(self.chi, self.zeta, violation, eta_chi, eta_zeta);
        self.chi = chi;
        self.zeta = zeta;
        Some(PenaltyState {
            chi,
            zeta,
            violation,
        })
    }
}

/// Runs one baseline with the shared CBO hyperparameters (`beta` is ignored).
pub fn run_baseline<T: Scalar>(
    kind: BaselineKind,
    problem: &BiLevelProblem<T>,
    params: &Cb2oParams,
    init: &InitSpec,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunTrace> {
    let params = Cb2oParams {
        beta: 1.0,
        regularized: None,
        lambda_grad: 0.0,
        sigma_grad: 0.0,
        ..params.clone()
    };
    drive(
        &mut StaticProblem(problem),
        &params,
        init,
        seed,
        opts,
        &mut Baseline::new(kind),
    )
}

pub fn penalized_cbo_run<T: Scalar>(
    problem: &BiLevelProblem<T>,
    chi: f64,
    params: &Cb2oParams,
    init: &InitSpec,
    seed: u64,
) -> Result<RunTrace> {
    run_baseline(
        BaselineKind::PenalizedCbo { chi },
        problem,
        params,
        init,
        seed,
        &RunOptions::default(),
    )
}

pub fn adaptive_penalized_cbo_run<T: Scalar>(
    problem: &BiLevelProblem<T>,
    chi0: f64,
    eta_chi: f64,
    zeta0: f64,
    eta_zeta: f64,
    params: &Cb2oParams,
    init: &InitSpec,
    seed: u64,
) -> Result<RunTrace> {
    run_baseline(
        BaselineKind::AdaptivePenalizedCbo {
            chi0,
            eta_chi,
            zeta0,
            eta_zeta,
        },
        problem,
        params,
        init,
        seed,
        &RunOptions::default(),
    )
}

pub fn cbo_gradient_force_run<T: Scalar>(
    problem: &BiLevelProblem<T>,
    chi: f64,
    params: &Cb2oParams,
    init: &InitSpec,
    seed: u64,
) -> Result<RunTrace> {
    run_baseline(
        BaselineKind::CboGradientForce { chi },
        problem,
        params,
        init,
        seed,
        &RunOptions::default(),
    )
}

pub fn projected_cbo_run<T: Scalar>(
    problem: &BiLevelProblem<T>,
    params: &Cb2oParams,
    init: &InitSpec,
    seed: u64,
) -> Result<RunTrace> {
    run_baseline(
        BaselineKind::ProjectedCbo,
        problem,
        params,
        init,
        seed,
        &RunOptions::default(),
    )
}
