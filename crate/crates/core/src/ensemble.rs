use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::Scalar;

/// `N` particle positions in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble<T> {
    positions: Vec<T>,
    n: usize,
    d: usize,
}

impl<T: Scalar> Ensemble<T> {
    /// Builds an ensemble from row-major coordinates.
    pub fn from_flat(positions: Vec<T>, n: usize, d: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!(
                "an ensemble needs at least 2 particles (got {n}); with one particle the \
                 quantile selection cannot reach beta_min = 2/N"
            )));
        }
        if d == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if positions.len() != n * d {
            return Err(Error::Config(format!(
                "expected {} coordinates for {n}x{d}, got {}",
                n * d,
                positions.len()
            )));
        }
        if let Some(k) = positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite coordinate at particle {}",
                k / d
            )));
        }
        Ok(Self { positions, n, d })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != d) {
            return Err(Error::Config("ragged particle list".into()));
        }
        let flat = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::from_flat(flat, rows.len(), d)
    }

    #[inline]
    pub fn n_particles(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.positions[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.positions.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.positions
    }

    pub fn as_flat_mut(&mut self) -> &mut [T] {
        &mut self.positions
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().all(|x| x.is_finite())
    }

    /// Arithmetic mean of the particle positions.
    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.d];
        for row in self.rows() {
            for (a, &x) in m.iter_mut().zip(row) {
                *a = *a + x;
            }
        }
        let inv = T::one() / T::of(self.n as f64);
        m.iter_mut().for_each(|a| *a = *a * inv);
        m
    }
}

/// Initial law of the particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// `mean + std * N(0, I)`; defaults to the standard Gaussian.
    Gaussian {
        #[serde(default)]
        mean: Option<Vec<f64>>,
        #[serde(default = "one")]
        std: f64,
    },
    /// Uniform on the box `[lo, hi]^d`.
    Uniform { lo: f64, hi: f64 },
    /// Explicit positions, used verbatim in order.
    Points { points: Vec<Vec<f64>> },
}

fn one() -> f64 {
    1.0
}

impl InitSpec {
    pub fn standard_gaussian() -> Self {
        InitSpec::Gaussian {
            mean: None,
            std: 1.0,
        }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        InitSpec::Uniform { lo, hi }
    }
}

impl Default for InitSpec {
    /// Uniform on `[-3, 3]^d`, the default for the constrained benchmarks.
    fn default() -> Self {
        InitSpec::uniform(-3.0, 3.0)
    }
}

/// Draws `n` particles in `R^d` from `init`. Particles are sampled in index
/// order, coordinates in axis order.
pub fn init_ensemble<T: Scalar>(
    n: usize,
    d: usize,
    init: &InitSpec,
    rng: &mut RngStream,
) -> Result<Ensemble<T>> {
    if n < 2 {
        return Err(Error::Config(format!(
            "n_particles = {n} < 2; CB2O needs ceil(beta N) >= 2 (beta_min = 2/N)"
        )));
    }
    if d == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    let flat: Vec<T> = match init {
        InitSpec::Gaussian { mean, std } => {
            if !std.is_finite() || *std < 0.0 {
                return Err(Error::Config(format!(
                    "gaussian std must be finite and >= 0, got {std}"
                )));
            }
            let mean = match mean {
                Some(m) if m.len() != d => {
                    return Err(Error::Config(format!(
                        "gaussian mean has {} entries, dimension is {d}",
                        m.len()
                    )))
                }
                Some(m) => m.clone(),
                None => vec![0.0; d],
            };
            if mean.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("gaussian mean must be finite".into()));
            }
            (0..n * d)
                .map(|k| T::of(mean[k % d] + std * rng.standard_normal()))
                .collect()
        }
        InitSpec::Uniform { lo, hi } => {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Config(format!(
                    "uniform bounds must be finite with lo <= hi, got [{lo}, {hi}]"
                )));
            }
            (0..n * d).map(|_| T::of(rng.uniform(*lo, *hi))).collect()
        }
        InitSpec::Points { points } => {
            if points.len() != n {
                return Err(Error::Config(format!(
                    "explicit init lists {} points, n_particles is {n}",
                    points.len()
                )));
            }
            if points.iter().any(|p| p.len() != d) {
                return Err(Error::Config(format!(
                    "explicit init points must have dimension {d}"
                )));
            }
            points.iter().flatten().map(|&x| T::of(x)).collect()
        }
    };
    Ensemble::from_flat(flat, n, d)
}
