use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::Scalar;

pub type Objective<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
/// Writes `grad L(x)` into the output slice.
pub type Gradient<T> = Arc<dyn Fn(&[T], &mut [T]) + Send + Sync>;
/// Writes the row-major `d x d` Hessian of `L` at `x` into the output slice.
pub type Hessian<T> = Arc<dyn Fn(&[T], &mut [T]) + Send + Sync>;

/// A constraint set with a closest-point projection and a tangent-space
/// projector, as needed by projected CBO.
pub trait Manifold<T: Scalar>: Send + Sync {
    fn project(&self, x: &mut [T]);
    /// Projects `v` onto the tangent space at the on-manifold point `at`.
    fn project_tangent(&self, at: &[T], v: &mut [T]);
    /// Ito drift per unit `sigma^2 dt` that keeps tangential noise with
    /// diagonal covariance `diag_sq` on the manifold. Zero unless overridden.
    fn ito_drift(&self, at: &[T], diag_sq: &[T], out: &mut [T]) {
        let _ = (at, diag_sq);
        out.iter_mut().for_each(|o| *o = T::zero());
    }
}

/// Sphere `{x : |x| = radius}` centred at the origin (the unit circle for `d = 2`).
#[derive(Clone, Copy, Debug)]
pub struct Sphere<T> {
    pub radius: T,
}

impl<T: Scalar> Sphere<T> {
    pub fn unit() -> Self {
        Self { radius: T::one() }
    }
}

impl<T: Scalar> Manifold<T> for Sphere<T> {
    fn project(&self, x: &mut [T]) {
        let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm > T::zero() {
            let s = self.radius / norm;
            x.iter_mut().for_each(|v| *v = *v * s);
        } else {
            // the origin is equidistant to every point; pick the first axis
            x.iter_mut().for_each(|v| *v = T::zero());
            x[0] = self.radius;
        }
    }

    fn project_tangent(&self, at: &[T], v: &mut [T]) {
        let nn = at.iter().map(|&a| a * a).sum::<T>();
        if nn == T::zero() {
            return;
        }
        let c = at.iter().zip(v.iter()).map(|(&a, &b)| a * b).sum::<T>() / nn;
        v.iter_mut().zip(at).for_each(|(b, &a)| *b = *b - c * a);
    }

    /// `-(1/2) (tr S - x^T S x / |x|^2) x / |x|^2` for `S = diag(diag_sq)`.
    fn ito_drift(&self, at: &[T], diag_sq: &[T], out: &mut [T]) {
        let nn = at.iter().map(|&a| a * a).sum::<T>();
        if nn == T::zero() {
            out.iter_mut().for_each(|o| *o = T::zero());
            return;
        }
        let tr = diag_sq.iter().copied().sum::<T>();
        let quad = at.iter().zip(diag_sq).map(|(&a, &s)| a * a * s).sum::<T>() / nn;
        let c = -T::of(0.5) * (tr - quad) / nn;
        out.iter_mut().zip(at).for_each(|(o, &a)| *o = c * a);
    }
}

/// Simple bi-level problem: minimise `upper` over the global minimisers of `lower`.
///
/// Evaluators must be pure; they are shared across concurrently running replicates.
#[derive(Clone)]
pub struct BiLevelProblem<T> {
    pub lower: Objective<T>,
    pub upper: Objective<T>,
    pub lower_grad: Option<Gradient<T>>,
    pub lower_hessian: Option<Hessian<T>>,
    pub manifold: Option<Arc<dyn Manifold<T>>>,
    pub theta_good: Option<Vec<T>>,
    pub lower_min: Option<T>,
    /// Search-space dimension; inferred from `theta_good` when unset.
    pub dim: Option<usize>,
}

impl<T: Scalar> BiLevelProblem<T> {
    pub fn new(
        lower: impl Fn(&[T]) -> T + Send + Sync + 'static,
        upper: impl Fn(&[T]) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            lower: Arc::new(lower),
            upper: Arc::new(upper),
            lower_grad: None,
            lower_hessian: None,
            manifold: None,
            theta_good: None,
            lower_min: None,
            dim: None,
        }
    }

    pub fn with_dim(mut self, d: usize) -> Self {
        self.dim = Some(d);
        self
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim.or_else(|| self.theta_good.as_ref().map(Vec::len))
    }

    pub fn with_lower_grad(mut self, g: impl Fn(&[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.lower_grad = Some(Arc::new(g));
        self
    }

    pub fn with_lower_hessian(
        mut self,
        h: impl Fn(&[T], &mut [T]) + Send + Sync + 'static,
    ) -> Self {
        self.lower_hessian = Some(Arc::new(h));
        self
    }

    pub fn with_manifold(mut self, m: impl Manifold<T> + 'static) -> Self {
        self.manifold = Some(Arc::new(m));
        self
    }

    pub fn with_theta_good(mut self, theta: Vec<T>) -> Self {
        self.theta_good = Some(theta);
        self
    }

    pub fn with_lower_min(mut self, v: T) -> Self {
        self.lower_min = Some(v);
        self
    }

    #[inline]
    pub fn lower(&self, x: &[T]) -> T {
        (self.lower)(x)
    }

    #[inline]
    pub fn upper(&self, x: &[T]) -> T {
        (self.upper)(x)
    }

    /// Checks `|L(theta_good) - lower_min| <= 1e-9` when both are known.
    pub fn validate(&self) -> Result<()> {
        if let (Some(t), Some(lmin)) = (&self.theta_good, self.lower_min) {
            let gap = (self.lower(t) - lmin).abs();
            if gap.as_f64() > 1e-9 {
                return Err(Error::Config(format!(
                    "theta_good is not a lower-level minimiser: |L(theta_good) - L_min| = {gap}"
                )));
            }
        }
        Ok(())
    }

    /// Hessian of `L` at `x`: analytic when supplied, otherwise central
    /// differences of the analytic gradient with step `1e-6` (scaled).
    pub fn lower_hessian_at(&self, x: &[T], out: &mut [T]) -> Result<()> {
        if let Some(h) = &self.lower_hessian {
            h(x, out);
            return Ok(());
        }
        let grad = self
            .lower_grad
            .as_ref()
            .ok_or_else(|| Error::Config("Hessian requested but no lower-level gradient".into()))?;
        let d = x.len();
        let mut xp = x.to_vec();
        let mut gp = vec![T::zero(); d];
        let mut gm = vec![T::zero(); d];
        for j in 0..d {
            let h = T::of(1e-6) * (T::one() + x[j].abs());
            xp[j] = x[j] + h;
            grad(&xp, &mut gp);
            xp[j] = x[j] - h;
            grad(&xp, &mut gm);
            xp[j] = x[j];
            for i in 0..d {
                out[i * d + j] = (gp[i] - gm[i]) / (h + h);
            }
        }
        // symmetrise
        for i in 0..d {
            for j in (i + 1)..d {
                let s = (out[i * d + j] + out[j * d + i]) * T::of(0.5);
                out[i * d + j] = s;
                out[j * d + i] = s;
            }
        }
        Ok(())
    }
}

impl<T> fmt::Debug for BiLevelProblem<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BiLevelProblem")
            .field("lower_grad", &self.lower_grad.is_some())
            .field("lower_hessian", &self.lower_hessian.is_some())
            .field("manifold", &self.manifold.is_some())
            .field("theta_good", &self.theta_good)
            .field("lower_min", &self.lower_min)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_projection_lands_on_sphere() {
        let s = Sphere::<f64>::unit();
        let mut x = [3.0, 4.0];
        s.project(&mut x);
        assert!((x[0] - 0.6).abs() < 1e-15 && (x[1] - 0.8).abs() < 1e-15);
        let mut v = [1.0, 1.0];
        s.project_tangent(&x, &mut v);
        assert!((v[0] * x[0] + v[1] * x[1]).abs() < 1e-15);
    }

    #[test]
    fn validate_flags_bad_theta_good() {
        let p = BiLevelProblem::<f64>::new(|x| x[0] * x[0], |_| 0.0)
            .with_theta_good(vec![0.1])
            .with_lower_min(0.0);
        assert!(p.validate().is_err());
        let ok = BiLevelProblem::<f64>::new(|x| x[0] * x[0], |_| 0.0)
            .with_theta_good(vec![0.0])
            .with_lower_min(0.0);
        ok.validate().unwrap();
    }

    #[test]
    fn fd_hessian_of_quadratic() {
        let p = BiLevelProblem::<f64>::new(|x| x[0] * x[0] + 3.0 * x[0] * x[1], |_| 0.0)
            .with_lower_grad(|x, g| {
                g[0] = 2.0 * x[0] + 3.0 * x[1];
                g[1] = 3.0 * x[0];
            });
        let mut h = [0.0; 4];
        p.lower_hessian_at(&[0.3, -1.2], &mut h).unwrap();
        for (a, b) in h.iter().zip([2.0, 3.0, 3.0, 0.0]) {
            assert!((a - b).abs() < 1e-6, "{h:?}");
        }
    }
}
