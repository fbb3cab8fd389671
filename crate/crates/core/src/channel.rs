//! Synthetic system channel state.
//!
//! Small-scale fading entries are i.i.d. `CN(0, 1)`. The generator is
//! ChaCha8 (`rand_chacha`, seeded with `seed_from_u64`); each complex entry
//! consumes two `u64` draws turned into uniforms `u = (x >> 11) * 2^-53` and
//! mapped through Box–Muller:
//!
//! ```text
//! r = sqrt(-2 ln(1 - u1)),  re = r cos(2 pi u2) / sqrt(2),  im = r sin(2 pi u2) / sqrt(2)
//! ```
//!
//! Entries are drawn user-major (`for k { for n { for antenna } }`), so the
//! channels of users `0..K` do not change when more users are added.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use num_complex::Complex;

use crate::cxkernel::CVec;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Version tag of the sampling procedure above.
pub const CHANNEL_SAMPLER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState<T> {
    pub antennas: usize,
    pub subcarriers: usize,
    pub users: usize,
    pub bandwidth_hz: T,
    pub noise_w: T,
    /// Large-scale gain per user.
    pub beta: Vec<T>,
    /// `h[n][k]`: channel of user `k` on subcarrier `n`.
    pub h: Vec<Vec<CVec<T>>>,
}

impl<T: Real> ChannelState<T> {
    pub fn channel(&self, subcarrier: usize, user: usize) -> &CVec<T> {
        &self.h[subcarrier][user]
    }

    /// `M σ²`, the normalisation appearing in every SNR expression.
    pub fn snr_scale(&self) -> T {
        T::from_usize(self.antennas).unwrap() * self.noise_w
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.subcarriers == 0 || self.users == 0 {
            return Err(Error::InvalidConfig("channel dimensions must be at least 1".into()));
        }
        if !(self.noise_w > T::zero()) || !(self.bandwidth_hz > T::zero()) {
            return Err(Error::InvalidConfig("noise power and bandwidth must be positive".into()));
        }
        if self.beta.len() != self.users || self.beta.iter().any(|&b| !(b > T::zero())) {
            return Err(Error::InvalidConfig("need one positive large-scale gain per user".into()));
        }
        if self.h.len() != self.subcarriers
            || self.h.iter().any(|row| row.len() != self.users || row.iter().any(|v| v.len() != self.antennas))
        {
            return Err(Error::InvalidConfig("channel array has the wrong shape".into()));
        }
        Ok(())
    }
}

/// Draws `CN(0,1)` samples with the documented Box–Muller transform.
pub struct GaussianSource {
    rng: ChaCha8Rng,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        GaussianSource { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn complex_normal(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt() * std::f64::consts::FRAC_1_SQRT_2;
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }
}

pub fn sample_channel<T: Real>(
    seed: u64,
    antennas: usize,
    subcarriers: usize,
    users: usize,
    beta: &[T],
    noise_w: T,
    bandwidth_hz: T,
) -> Result<ChannelState<T>> {
    let mut src = GaussianSource::new(seed);
    let mut h = vec![Vec::with_capacity(users); subcarriers];
    for _k in 0..users {
        for row in h.iter_mut() {
            let v: Vec<Complex<T>> = (0..antennas)
                .map(|_| {
                    let (re, im) = src.complex_normal();
                    Complex::new(T::of(re), T::of(im))
                })
                .collect();
            row.push(CVec(v));
        }
    }
    let state = ChannelState {
        antennas,
        subcarriers,
        users,
        bandwidth_hz,
        noise_w,
        beta: beta.to_vec(),
        h,
    };
    state.validate()?;
    Ok(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` in a run seeded with `base_seed`.
///
/// `splitmix64(base_seed + (trial + 1) * 0x9E3779B97F4A7C15)` (wrapping). The
/// multiplier is odd and the finaliser is a bijection, so the map is injective
/// in `trial` for a fixed base seed. Stable across releases.
pub fn derive_trial_seed(base_seed: u64, trial: u64) -> u64 {
    splitmix64(base_seed.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cxkernel::cdot;
    use std::collections::HashSet;

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = sample_channel(42, 4, 8, 3, &[1.0; 3], 1e-9, 39e3).unwrap();
        let b = sample_channel(42, 4, 8, 3, &[1.0; 3], 1e-9, 39e3).unwrap();
        assert_eq!(a, b);
        let c = sample_channel(43, 4, 8, 3, &[1.0; 3], 1e-9, 39e3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn user_prefix_is_stable() {
        let small = sample_channel::<f64>(9, 4, 5, 2, &[1.0; 2], 1.0, 1.0).unwrap();
        let big = sample_channel::<f64>(9, 4, 5, 4, &[1.0; 4], 1.0, 1.0).unwrap();
        for n in 0..5 {
            assert_eq!(small.h[n][..], big.h[n][..2]);
        }
    }

    #[test]
    fn entry_moments() {
        // 10^5 entries: E|h|^2 = 1, E[re^2] = E[im^2] = 1/2
        let st = sample_channel::<f64>(7, 100, 100, 10, &[1.0; 10], 1.0, 1.0).unwrap();
        let entries: Vec<_> = st.h.iter().flatten().flat_map(|v| v.0.iter().copied()).collect();
        assert_eq!(entries.len(), 100_000);
        let n = entries.len() as f64;
        let power = entries.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!((power - 1.0).abs() < 0.02, "mean power {power}");
        let var_re = entries.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        let var_im = entries.iter().map(|z| z.im * z.im).sum::<f64>() / n;
        assert!((var_re - 0.5).abs() < 0.01 && (var_im - 0.5).abs() < 0.01);

        // independence spot checks: re/im and consecutive entries
        let rho_ri = entries.iter().map(|z| z.re * z.im).sum::<f64>() / n / (var_re * var_im).sqrt();
        let rho_lag = entries.windows(2).map(|w| w[0].re * w[1].re).sum::<f64>() / (n - 1.0) / var_re;
        assert!(rho_ri.abs() < 0.02 && rho_lag.abs() < 0.02, "{rho_ri} {rho_lag}");
    }

    #[test]
    fn vector_norm_expectation() {
        let m = 8;
        let st = sample_channel::<f64>(11, m, 100, 100, &[1.0; 100], 1.0, 1.0).unwrap();
        let norms: Vec<f64> = st.h.iter().flatten().map(|v| cdot(v, v).unwrap().re).collect();
        let n = norms.len() as f64;
        let mean = norms.iter().sum::<f64>() / n;
        // ||h||^2 ~ Gamma(m, 1): variance m
        let sem = (m as f64 / n).sqrt();
        assert!((mean - m as f64).abs() < 3.0 * sem, "mean {mean}");
    }

    #[test]
    fn invalid_parameters() {
        assert!(sample_channel::<f64>(1, 0, 1, 1, &[1.0], 1.0, 1.0).is_err());
        assert!(sample_channel::<f64>(1, 2, 1, 2, &[1.0], 1.0, 1.0).is_err());
        assert!(sample_channel::<f64>(1, 2, 1, 1, &[1.0], 0.0, 1.0).is_err());
        assert!(sample_channel::<f64>(1, 2, 1, 1, &[-1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn trial_seeds() {
        assert_ne!(derive_trial_seed(5, 0), derive_trial_seed(5, 1));
        assert_eq!(derive_trial_seed(5, 17), derive_trial_seed(5, 17));
        let mut seen = HashSet::new();
        for base in 0..1000u64 {
            for trial in 0..4u64 {
                assert!(seen.insert(derive_trial_seed(base, trial)), "collision at base {base} trial {trial}");
            }
        }
        let mut per_trial = HashSet::new();
        for trial in 0..100_000u64 {
            assert!(per_trial.insert(derive_trial_seed(123, trial)));
        }
    }
}
