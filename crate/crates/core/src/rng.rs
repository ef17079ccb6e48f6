//! Seeded random streams.
//!
//! Every replicate owns one [`RngStream`] keyed by `(seed, stream_id)`. The
//! generator is ChaCha8 with the stream id mapped onto ChaCha's 64-bit stream
//! counter, so streams under one seed never overlap and can be created in any
//! order. Gaussian draws use the ziggurat sampler of `rand_distr::StandardNormal`
//! (one `u64` per accepted draw in the common path); the crate versions are
//! pinned in `Cargo.lock`, which is what makes traces bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Scalar;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derives an independent child stream (e.g. one per particle or per
    /// mini-batch sampler). The child depends only on `(seed, stream_id, tag)`,
    /// never on how much of the parent has been consumed.
    pub fn split(&self, tag: u64) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ splitmix64(self.stream_id)), tag)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    #[inline]
    pub fn fill_gaussian<T: Scalar>(&mut self, out: &mut [T]) {
        for x in out {
            *x = T::of(self.standard_normal());
        }
    }

    pub fn gaussian_vector<T: Scalar>(&mut self, d: usize) -> Vec<T> {
        let mut v = vec![T::zero(); d];
        self.fill_gaussian(&mut v);
        v
    }

    /// Uniform draw on `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    /// Uniform permutation of `0..n` (Fisher-Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.rng.random_range(0..=i);
            p.swap(i, j);
        }
        p
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_sequence() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let va: Vec<f64> = a.gaussian_vector(64);
        let vb: Vec<f64> = b.gaussian_vector(64);
        assert_eq!(va, vb);
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        let va: Vec<f64> = a.gaussian_vector(8);
        let vb: Vec<f64> = b.gaussian_vector(8);
        assert_ne!(va, vb);
    }

    #[test]
    fn gaussian_moments() {
        let mut r = RngStream::new(1, 0);
        let n = 1_000_000;
        let v: Vec<f64> = r.gaussian_vector(n);
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // CLT: sd(mean) = 1e-3, sd(var) ~ 1.4e-3
        assert!(mean.abs() < 5e-3, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-2, "var {var}");
    }

    #[test]
    fn stream_correlation_is_small() {
        let mut a = RngStream::new(42, 10);
        let mut b = RngStream::new(42, 11);
        let n = 100_000;
        let va: Vec<f64> = a.gaussian_vector(n);
        let vb: Vec<f64> = b.gaussian_vector(n);
        let ma = va.iter().sum::<f64>() / n as f64;
        let mb = vb.iter().sum::<f64>() / n as f64;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in va.iter().zip(&vb) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        let rho = sab / (saa * sbb).sqrt();
        assert!(rho.abs() < 0.02, "rho {rho}");
    }

    #[test]
    fn split_is_independent_of_parent_position() {
        let a = RngStream::new(5, 2);
        let mut b = RngStream::new(5, 2);
        b.standard_normal();
        let mut ca = a.split(9);
        let mut cb = b.split(9);
        assert_eq!(ca.standard_normal(), cb.standard_normal());
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut r = RngStream::new(3, 0);
        let mut p = r.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
