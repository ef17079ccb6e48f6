use serde::{Deserialize, Serialize};

use crate::consensus::selection_size;
use crate::diffusion::DiffusionKind;
use crate::error::{Error, Result};

/// Hyperparameters shared by CB2O and the CBO baselines.
///
/// The defaults are the constrained-Ackley setting: `N = 100, lambda = 1,
/// sigma = 1, alpha = 30, beta = 1/20, dt = 0.01, K = 30000, eps_stop = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cb2oParams {
    pub n_particles: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dt: f64,
    pub diffusion: DiffusionKind,
    pub eps_stop: f64,
    pub max_iters: usize,
    /// Gradient-drift variant: `-lambda_grad grad L dt + sigma_grad D(grad L) dB`.
    pub lambda_grad: f64,
    pub sigma_grad: f64,
    pub regularized: Option<Regularization>,
    /// Re-initialise after this many steps with an unchanged consensus point.
    pub reinit_patience: Option<usize>,
    pub schedulers: Vec<Scheduler>,
    /// Iterations per epoch when no mini-batch sampler defines one.
    pub epoch_len: usize,
    /// Log a warning when the drift does not dominate the noise.
    pub warn_well_posedness: bool,
}

impl Default for Cb2oParams {
    fn default() -> Self {
        Self {
            n_particles: 100,
            lambda: 1.0,
            sigma: 1.0,
            alpha: 30.0,
            beta: 1.0 / 20.0,
            dt: 0.01,
            diffusion: DiffusionKind::default(),
            eps_stop: 0.0,
            max_iters: 30_000,
            lambda_grad: 0.0,
            sigma_grad: 0.0,
            regularized: None,
            reinit_patience: None,
            schedulers: Vec::new(),
            epoch_len: 100,
            warn_well_posedness: true,
        }
    }
}

/// Ball radius and threshold slack of the regularized consensus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regularization {
    pub radius: f64,
    pub delta_q: f64,
    /// Fall back to the plain quantile consensus when the regularized set is empty.
    #[serde(default = "yes")]
    pub fallback: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleTarget {
    Alpha,
    Sigma,
    Beta,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleRule {
    /// `x_e = x_0 * factor^e`
    GeometricPerEpoch { factor: f64 },
    /// `sigma_e = sigma0 / log2(e + 2)`
    LogCooling { sigma0: f64 },
    /// `beta_e = max(beta0 * kappa^e, beta_min, 2/N)`
    GeometricFloor {
        beta0: f64,
        kappa: f64,
        beta_min: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scheduler {
    pub target: ScheduleTarget,
    pub rule: ScheduleRule,
    /// Iterations per epoch; falls back to the run's epoch length.
    #[serde(default)]
    pub epoch_len: Option<usize>,
}

impl Scheduler {
    pub fn alpha_doubling() -> Self {
        Self {
            target: ScheduleTarget::Alpha,
            rule: ScheduleRule::GeometricPerEpoch { factor: 2.0 },
            epoch_len: None,
        }
    }

    pub fn sigma_log_cooling(sigma0: f64) -> Self {
        Self {
            target: ScheduleTarget::Sigma,
            rule: ScheduleRule::LogCooling { sigma0 },
            epoch_len: None,
        }
    }

    pub fn beta_decay(beta0: f64, kappa: f64, beta_min: f64) -> Self {
        Self {
            target: ScheduleTarget::Beta,
            rule: ScheduleRule::GeometricFloor {
                beta0,
                kappa,
                beta_min,
            },
            epoch_len: None,
        }
    }

    /// Value after `epoch` completed epochs; `base` is the unscheduled value.
    pub fn value_at(&self, base: f64, epoch: usize, n_particles: usize) -> f64 {
        let e = epoch as i32;
        match self.rule {
            ScheduleRule::GeometricPerEpoch { factor } => base * factor.powi(e),
            ScheduleRule::LogCooling { sigma0 } => sigma0 / ((epoch + 2) as f64).log2(),
            ScheduleRule::GeometricFloor {
                beta0,
                kappa,
                beta_min,
            } => (beta0 * kappa.powi(e))
                .max(beta_min)
                .max(2.0 / n_particles as f64),
        }
    }
}

/// `(alpha, sigma, beta)` in force during one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Effective {
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
}

impl Cb2oParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.n_particles < 2 {
            return bad("solver.n_particles must be >= 2");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("solver.lambda must be finite and > 0");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("solver.sigma must be finite and >= 0");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("solver.alpha must be finite and >= 0");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("solver.dt must be finite and > 0");
        }
        if !(self.eps_stop >= 0.0) {
            return bad("solver.eps_stop must be >= 0");
        }
        if !(self.lambda_grad >= 0.0 && self.sigma_grad >= 0.0) {
            return bad("solver.lambda_grad and solver.sigma_grad must be >= 0");
        }
        if self.epoch_len == 0 {
            return bad("solver.epoch_len must be >= 1");
        }
        if self.reinit_patience == Some(0) {
            return bad("solver.reinit_patience must be >= 1");
        }
        if let Some(r) = &self.regularized {
            if !(r.radius > 0.0 && r.radius.is_finite()) {
                return bad("solver.regularized.radius must be finite and > 0");
            }
            if !(r.delta_q >= 0.0) {
                return bad("solver.regularized.delta_q must be >= 0");
            }
        }
        for s in &self.schedulers {
            if s.epoch_len == Some(0) {
                return bad("scheduler epoch_len must be >= 1");
            }
        }
        selection_size(self.beta, self.n_particles)?;
        Ok(())
    }

    /// Parameters in force after `epoch` completed epochs. `epoch_of` maps a
    /// scheduler's own epoch length to its epoch count.
    pub fn effective(&self, epoch_of: impl Fn(Option<usize>) -> usize) -> Effective {
        let mut eff = Effective {
            alpha: self.alpha,
            sigma: self.sigma,
            beta: self.beta,
        };
        for s in &self.schedulers {
            let e = epoch_of(s.epoch_len);
            match s.target {
                ScheduleTarget::Alpha => eff.alpha = s.value_at(self.alpha, e, self.n_particles),
                ScheduleTarget::Sigma => eff.sigma = s.value_at(self.sigma, e, self.n_particles),
                ScheduleTarget::Beta => eff.beta = s.value_at(self.beta, e, self.n_particles),
            }
        }
        eff
    }

    /// `false` when `2 lambda <= d sigma^2` (isotropic) or `2 lambda <= sigma^2` (anisotropic).
    pub fn well_posed(&self, d: usize) -> bool {
        self.diffusion.contracts(self.lambda, self.sigma, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_are_exact() {
        let p = Cb2oParams {
            alpha: 3.0,
            sigma: 0.8,
            beta: 0.5,
            n_particles: 100,
            schedulers: vec![
                Scheduler::alpha_doubling(),
                Scheduler::sigma_log_cooling(0.8),
                Scheduler::beta_decay(0.5, 0.9, 0.1),
            ],
            ..Default::default()
        };
        for e in 0..40usize {
            let eff = p.effective(|_| e);
            assert_eq!(eff.alpha, 3.0 * 2f64.powi(e as i32));
            assert_eq!(eff.sigma, 0.8 / ((e + 2) as f64).log2());
            assert_eq!(eff.beta, (0.5 * 0.9f64.powi(e as i32)).max(0.1));
        }
    }

    #[test]
    fn beta_floor_respects_two_over_n() {
        let s = Scheduler::beta_decay(0.5, 0.5, 0.0);
        assert_eq!(s.value_at(0.5, 30, 50), 2.0 / 50.0);
    }

    #[test]
    fn validate_rejects_small_beta() {
        let p = Cb2oParams {
            beta: 0.009,
            ..Default::default()
        };
        let msg = p.validate().unwrap_err().to_string();
        assert!(msg.contains("0.02"), "{msg}");
    }

    #[test]
    fn well_posedness_flag() {
        let mut p = Cb2oParams::default();
        p.diffusion = DiffusionKind::Isotropic;
        assert!(!p.well_posed(2));
        p.sigma = 0.3;
        assert!(p.well_posed(2));
    }

    #[test]
    fn params_json_rejects_unknown_key() {
        let err = serde_json::from_str::<Cb2oParams>(r#"{"lamda": 1.0}"#).unwrap_err();
        assert!(err.to_string().contains("lamda"));
    }
}
