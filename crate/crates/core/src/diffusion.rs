use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Shape of the diffusion matrix `D(v)` multiplying the Brownian increment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    /// `D(v) = |v|_2 I`
    #[default]
    Isotropic,
    /// `D(v) = diag(v)`
    Anisotropic,
}

impl DiffusionKind {
    /// Writes `D(v) z` into `out`.
    #[inline]
    pub fn apply<T: Scalar>(self, v: &[T], z: &[T], out: &mut [T]) {
        match self {
            DiffusionKind::Isotropic => {
                let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = norm * zi;
                }
            }
            DiffusionKind::Anisotropic => {
                for ((o, &vi), &zi) in out.iter_mut().zip(v).zip(z) {
                    *o = vi * zi;
                }
            }
        }
    }

    /// Writes the diagonal of `D(v)^2` into `out`.
    #[inline]
    pub fn squared_diag<T: Scalar>(self, v: &[T], out: &mut [T]) {
        match self {
            DiffusionKind::Isotropic => {
                let sq = v.iter().map(|&x| x * x).sum::<T>();
                out.iter_mut().for_each(|o| *o = sq);
            }
            DiffusionKind::Anisotropic => {
                for (o, &vi) in out.iter_mut().zip(v) {
                    *o = vi * vi;
                }
            }
        }
    }

    /// `2 lambda > d sigma^2` (isotropic) or `2 lambda > sigma^2` (anisotropic).
    pub fn contracts(self, lambda: f64, sigma: f64, d: usize) -> bool {
        let factor = match self {
            DiffusionKind::Isotropic => d as f64,
            DiffusionKind::Anisotropic => 1.0,
        };
        2.0 * lambda > factor * sigma * sigma
    }
}
