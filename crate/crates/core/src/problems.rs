//! Benchmark problems: Ackley under circular and star equality constraints,
//! and a Himmelblau/parabola toy problem with four lower-level minimisers.

use crate::ensemble::InitSpec;
use crate::error::{Error, Result};
use crate::problem::{BiLevelProblem, Sphere};
use crate::Scalar;

/// Shifted and scaled Ackley function.
#[derive(Clone, Debug, PartialEq)]
pub struct Ackley {
    pub amplitude: f64,
    pub a: f64,
    pub b: f64,
    pub center: Vec<f64>,
}

impl Default for Ackley {
    /// `A = 20, a = 0.2, b = 3`, centred at `(1/2, 1/3)`.
    fn default() -> Self {
        Self {
            amplitude: 20.0,
            a: 0.2,
            b: 3.0,
            center: vec![0.5, 1.0 / 3.0],
        }
    }
}

impl Ackley {
    pub fn eval<T: Scalar>(&self, x: &[T]) -> T {
        let d = T::of(x.len() as f64);
        let amp = T::of(self.amplitude);
        let b = T::of(self.b);
        let two_pi_b = T::of(2.0 * std::f64::consts::PI * self.b);
        let mut sq = T::zero();
        let mut cs = T::zero();
        for (&xi, &ci) in x.iter().zip(&self.center) {
            let u = xi - T::of(ci);
            sq = sq + u * u;
            cs = cs + (two_pi_b * u).cos();
        }
        -amp * (-T::of(self.a) * (b * b / d * sq).sqrt()).exp() - (cs / d).exp() + T::E() + amp
    }
}

/// Two-dimensional Ackley with the default parameters (`A = 20, a = 0.2, b = 3`,
/// centre `(1/2, 1/3)`).
#[inline]
pub fn ackley<T: Scalar>(x: &[T]) -> T {
    let u = x[0] - T::of(0.5);
    let v = x[1] - T::of(1.0 / 3.0);
    let amp = T::of(20.0);
    let two_pi_b = T::of(6.0 * std::f64::consts::PI);
    let radial = (T::of(4.5) * (u * u + v * v)).sqrt();
    let cosine = ((two_pi_b * u).cos() + (two_pi_b * v).cos()) * T::of(0.5);
    -amp * (T::of(-0.2) * radial).exp() - cosine.exp() + T::E() + amp
}

/// `(x1^2 + x2^2 - 1)^2`
#[inline]
pub fn circular_lower<T: Scalar>(x: &[T]) -> T {
    let h = x[0] * x[0] + x[1] * x[1] - T::one();
    h * h
}

pub fn circular_lower_grad<T: Scalar>(x: &[T], g: &mut [T]) {
    let h = x[0] * x[0] + x[1] * x[1] - T::one();
    let c = T::of(4.0) * h;
    g[0] = c * x[0];
    g[1] = c * x[1];
}

pub fn circular_lower_hessian<T: Scalar>(x: &[T], hess: &mut [T]) {
    let h = x[0] * x[0] + x[1] * x[1] - T::one();
    let eight = T::of(8.0);
    let four_h = T::of(4.0) * h;
    hess[0] = eight * x[0] * x[0] + four_h;
    hess[1] = eight * x[0] * x[1];
    hess[2] = hess[1];
    hess[3] = eight * x[1] * x[1] + four_h;
}

/// Star radius `1 + 0.5 sin(5 phi)` with `atan2(0, 0) := 0`.
#[inline]
fn star_angle<T: Scalar>(x: &[T]) -> T {
    if x[0] == T::zero() && x[1] == T::zero() {
        T::zero()
    } else {
        x[1].atan2(x[0])
    }
}

/// `(x1^2 + x2^2 - (1 + 0.5 sin(5 atan2(x2, x1)))^2)^2`
#[inline]
pub fn star_lower<T: Scalar>(x: &[T]) -> T {
    let s = T::one() + T::of(0.5) * (T::of(5.0) * star_angle(x)).sin();
    let h = x[0] * x[0] + x[1] * x[1] - s * s;
    h * h
}

pub fn star_lower_grad<T: Scalar>(x: &[T], g: &mut [T]) {
    let phi = star_angle(x);
    let five = T::of(5.0);
    let s = T::one() + T::of(0.5) * (five * phi).sin();
    let ds = T::of(2.5) * (five * phi).cos();
    let r2 = x[0] * x[0] + x[1] * x[1];
    let h = r2 - s * s;
    // grad phi = (-x2, x1) / r^2, taken as 0 at the origin
    let (dphi0, dphi1) = if r2 > T::zero() {
        (-x[1] / r2, x[0] / r2)
    } else {
        (T::zero(), T::zero())
    };
    let two = T::of(2.0);
    let c = two * s * ds;
    let dh0 = two * x[0] - c * dphi0;
    let dh1 = two * x[1] - c * dphi1;
    g[0] = two * h * dh0;
    g[1] = two * h * dh1;
}

pub const CIRCLE_THETA_GOOD: [f64; 2] = [0.781475, 0.623937];
pub const STAR_THETA_GOOD: [f64; 2] = [0.482208, 0.468687];

/// Parabola centre of the Himmelblau toy problem; makes `(3, 2)` the good minimiser.
pub const HIMMELBLAU_PARABOLA_CENTER: [f64; 2] = [3.2, 2.2];

/// The four global minimisers of the Himmelblau function.
pub const HIMMELBLAU_MINIMIZERS: [[f64; 2]; 4] = [
    [3.0, 2.0],
    [-2.805_118_086_952_745, 3.131_312_518_250_573],
    [-3.779_310_253_377_747, -3.283_185_991_286_170],
    [3.584_428_340_330_492, -1.848_126_526_964_404],
];

pub fn himmelblau<T: Scalar>(x: &[T]) -> T {
    let a = x[0] * x[0] + x[1] - T::of(11.0);
    let b = x[0] + x[1] * x[1] - T::of(7.0);
    a * a + b * b
}

pub fn ackley_circle<T: Scalar>() -> BiLevelProblem<T> {
    BiLevelProblem::new(circular_lower::<T>, ackley::<T>)
        .with_lower_grad(circular_lower_grad::<T>)
        .with_lower_hessian(circular_lower_hessian::<T>)
        .with_manifold(Sphere::unit())
        .with_theta_good(CIRCLE_THETA_GOOD.iter().map(|&v| T::of(v)).collect())
        .with_lower_min(T::zero())
}

/// Star-constrained Ackley. No manifold projector is provided; the Hessian
/// needed by the gradient-force baseline falls back to finite differences.
pub fn ackley_star<T: Scalar>() -> BiLevelProblem<T> {
    BiLevelProblem::new(star_lower::<T>, ackley::<T>)
        .with_lower_grad(star_lower_grad::<T>)
        .with_theta_good(STAR_THETA_GOOD.iter().map(|&v| T::of(v)).collect())
        .with_lower_min(T::zero())
}

pub fn himmelblau_problem<T: Scalar>() -> BiLevelProblem<T> {
    let c = HIMMELBLAU_PARABOLA_CENTER.map(T::of);
    BiLevelProblem::new(himmelblau::<T>, move |x: &[T]| {
        let u = x[0] - c[0];
        let v = x[1] - c[1];
        u * u + v * v
    })
    .with_theta_good(vec![T::of(3.0), T::of(2.0)])
    .with_lower_min(T::zero())
}

#[derive(Clone, Debug)]
pub struct PrecisionTarget {
    pub config: &'static str,
    pub precision: f64,
    pub source: &'static str,
}

#[derive(Clone, Debug)]
pub struct BenchmarkSpec<T> {
    pub name: &'static str,
    pub problem: BiLevelProblem<T>,
    pub default_init: InitSpec,
    pub known_precision_targets: Vec<PrecisionTarget>,
}

pub const BENCHMARK_NAMES: [&str; 3] = ["ackley-circle", "ackley-star", "himmelblau-demo"];

pub fn himmelblau_demo<T: Scalar>() -> BenchmarkSpec<T> {
    BenchmarkSpec {
        name: "himmelblau-demo",
        problem: himmelblau_problem(),
        default_init: InitSpec::uniform(-5.0, 5.0),
        known_precision_targets: Vec::new(),
    }
}

/// Looks up a registered benchmark by name.
pub fn benchmark<T: Scalar>(name: &str) -> Result<BenchmarkSpec<T>> {
    let t = |config, precision, source| PrecisionTarget {
        config,
        precision,
        source,
    };
    match name {
        "ackley-circle" => Ok(BenchmarkSpec {
            name: "ackley-circle",
            problem: ackley_circle(),
            default_init: InitSpec::default(),
            known_precision_targets: vec![
                t("cb2o-n100", 4e-3, "circle, same particles"),
                t("penalized-cbo-n100", 9.3e-3, "circle, same particles"),
                t(
                    "adaptive-penalized-cbo-n100",
                    5.1e-3,
                    "circle, same particles",
                ),
                t("cbo-gf-n100", 1e-3, "circle, same particles"),
                t("projected-cbo-n100", 1.4e-3, "circle, same particles"),
                t("cb2o-n1500", 1e-3, "circle, same time"),
            ],
        }),
        "ackley-star" => Ok(BenchmarkSpec {
            name: "ackley-star",
            problem: ackley_star(),
            default_init: InitSpec::default(),
            known_precision_targets: vec![
                t("cb2o-n100", 8e-3, "star, same particles"),
                t("cb2o-n2000", 3.2e-3, "star, same time"),
            ],
        }),
        "himmelblau-demo" => Ok(himmelblau_demo()),
        other => Err(Error::UnknownBenchmark {
            name: other.to_string(),
            available: BENCHMARK_NAMES.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn ackley_struct_matches_fast_path() {
        let a = Ackley::default();
        let mut r = RngStream::new(4, 0);
        for _ in 0..100 {
            let x = [r.uniform(-3.0, 3.0), r.uniform(-3.0, 3.0)];
            assert!((a.eval(&x) - ackley(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn ackley_zero_at_center() {
        let v = ackley(&[0.5f64, 1.0 / 3.0]);
        assert!(v.abs() < 1e-14, "{v}");
    }

    #[test]
    fn ackley_symmetric_about_center() {
        let mut r = RngStream::new(11, 0);
        for _ in 0..100 {
            let v = [r.uniform(-2.0, 2.0), r.uniform(-2.0, 2.0)];
            let p = ackley(&[0.5 + v[0], 1.0 / 3.0 + v[1]]);
            let m = ackley(&[0.5 - v[0], 1.0 / 3.0 - v[1]]);
            assert!((p - m).abs() < 1e-12);
        }
    }

    #[test]
    fn ackley_at_origin_matches_transcription() {
        // independent transcription with the constants written out
        let (x, y) = (0.0f64 - 0.5, 0.0f64 - 1.0 / 3.0);
        let r = (9.0 / 2.0 * (x * x + y * y)).sqrt();
        let c =
            ((6.0 * std::f64::consts::PI * x).cos() + (6.0 * std::f64::consts::PI * y).cos()) / 2.0;
        let expect = -20.0 * (-0.2 * r).exp() - c.exp() + std::f64::consts::E + 20.0;
        assert!((ackley(&[0.0f64, 0.0]) - expect).abs() < 1e-12);
    }

    #[test]
    fn lower_values_at_printed_minimisers() {
        assert!(circular_lower(&CIRCLE_THETA_GOOD) <= 1e-9);
        assert!(star_lower(&STAR_THETA_GOOD) <= 1e-9);
        assert_eq!(circular_lower(&[2.0f64, 0.0]), 9.0);
        ackley_circle::<f64>().validate().unwrap();
        ackley_star::<f64>().validate().unwrap();
    }

    #[test]
    fn star_origin_is_finite() {
        assert_eq!(star_lower(&[0.0f64, 0.0]), 1.0);
        let mut g = [f64::NAN; 2];
        star_lower_grad(&[0.0f64, 0.0], &mut g);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn himmelblau_minimisers() {
        for m in HIMMELBLAU_MINIMIZERS {
            assert!(himmelblau(&m) <= 1e-6, "{m:?}");
        }
        let p = himmelblau_problem::<f64>();
        let best = HIMMELBLAU_MINIMIZERS
            .iter()
            .min_by(|a, b| p.upper(&a[..]).total_cmp(&p.upper(&b[..])))
            .unwrap();
        assert_eq!(best.to_vec(), p.theta_good.unwrap());
    }

    #[test]
    fn registry() {
        for name in BENCHMARK_NAMES {
            assert_eq!(benchmark::<f64>(name).unwrap().name, name);
        }
        let err = benchmark::<f64>("rosenbrock").unwrap_err();
        assert!(err.to_string().contains("ackley-star"));
    }
}
