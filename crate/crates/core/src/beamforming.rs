//! Per-(message, subcarrier) beam directions and power quotes.
//!
//! A quote `q` is the power that buys unit effective SNR for the weakest
//! audience member along a fixed unit direction `w`:
//!
//! ```text
//! q = M σ² / min_k β_k |h_k^H w|²,    rate_k ≥ B log2(1 + P / q)
//! ```

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::cxkernel::{axpy_outer, cdot_unchecked, cnorm, CVec};
use crate::error::{Error, Result};
use crate::partition::{Message, UserSet};
use crate::scalar::Real;

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_MAX: usize = 10_000;

/// One audience member's channel on a subcarrier.
#[derive(Debug, Clone, Copy)]
pub struct Receiver<'a, T> {
    pub user: usize,
    pub h: &'a CVec<T>,
    pub beta: T,
}

/// Channels of the members of `audience` on `subcarrier`.
pub fn audience_channels<T: Real>(chan: &ChannelState<T>, subcarrier: usize, audience: UserSet) -> Vec<Receiver<'_, T>> {
    audience
        .users()
        .map(|k| Receiver { user: k, h: chan.channel(subcarrier, k), beta: chan.beta[k] })
        .collect()
}

/// Power per unit effective SNR, in watts.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PowerQuote<T>(pub T);

impl<T: Real> PowerQuote<T> {
    pub fn infinite() -> Self {
        PowerQuote(T::infinity())
    }

    pub fn value(self) -> T {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

fn require_audience<T>(rx: &[Receiver<'_, T>]) -> Result<()> {
    if rx.is_empty() {
        return Err(Error::DegenerateChannel("empty audience"));
    }
    Ok(())
}

/// Quote implied by direction `w` (assumed unit norm).
pub fn quote_for<T: Real>(w: &CVec<T>, rx: &[Receiver<'_, T>], snr_scale: T) -> Result<PowerQuote<T>> {
    require_audience(rx)?;
    let mut worst = T::infinity();
    let mut worst_user = rx[0].user;
    for r in rx {
        if r.h.len() != w.len() {
            return Err(Error::LengthMismatch { left: r.h.len(), right: w.len() });
        }
        let gain = r.beta * cdot_unchecked(r.h, w).norm_sqr();
        if gain < worst {
            worst = gain;
            worst_user = r.user;
        }
    }
    if !(worst > T::zero()) {
        return Err(Error::InfeasibleDirection { user: worst_user });
    }
    Ok(PowerQuote(snr_scale / worst))
}

/// Large-array beam: the normalised sum of `h_k / sqrt(β_k)` over the audience.
pub fn asymptotic_beam<T: Real>(rx: &[Receiver<'_, T>], snr_scale: T) -> Result<(CVec<T>, PowerQuote<T>)> {
    require_audience(rx)?;
    let mut sum = CVec::zeros(rx[0].h.len());
    for r in rx {
        if r.h.len() != sum.len() {
            return Err(Error::LengthMismatch { left: r.h.len(), right: sum.len() });
        }
        sum.add_scaled(Complex::new(T::one() / r.beta.sqrt(), T::zero()), r.h);
    }
    let w = sum.normalized().ok_or(Error::DegenerateChannel("aggregate beam direction is zero"))?;
    let q = quote_for(&w, rx, snr_scale)?;
    Ok((w, q))
}

/// Normalised maximum ratio transmission toward a single channel.
pub fn mrt_unicast<T: Real>(h: &CVec<T>) -> Result<CVec<T>> {
    h.normalized().ok_or(Error::DegenerateChannel("zero channel"))
}

/// How the multicast baseline turns several channels into one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MulticastMrt {
    /// Principal eigenvector of `Σ β_k h_k h_k^H`.
    #[default]
    Eigen,
    /// Normalised `Σ sqrt(β_k) h_k`.
    Sum,
}

/// Multicast MRT direction for an audience.
pub fn mrt_multicast<T: Real>(rx: &[Receiver<'_, T>]) -> Result<CVec<T>> {
    mrt_multicast_with(rx, MulticastMrt::Eigen)
}

pub fn mrt_multicast_with<T: Real>(rx: &[Receiver<'_, T>], kind: MulticastMrt) -> Result<CVec<T>> {
    require_audience(rx)?;
    if rx.len() == 1 {
        return mrt_unicast(rx[0].h);
    }
    match kind {
        MulticastMrt::Eigen => principal_direction(rx),
        MulticastMrt::Sum => {
            let mut sum = CVec::zeros(rx[0].h.len());
            for r in rx {
                sum.add_scaled(Complex::new(r.beta.sqrt(), T::zero()), r.h);
            }
            sum.normalized().ok_or(Error::DegenerateChannel("channel sum is zero"))
        }
    }
}

/// Power iteration on `A = Σ β_k h_k h_k^H`, started from the strongest channel.
fn principal_direction<T: Real>(rx: &[Receiver<'_, T>]) -> Result<CVec<T>> {
    let start = rx
        .iter()
        .max_by(|a, b| a.h.norm_sqr().partial_cmp(&b.h.norm_sqr()).unwrap_or(std::cmp::Ordering::Equal))
        .expect("non-empty audience");
    let mut x = mrt_unicast(start.h).map_err(|_| Error::DegenerateChannel("zero channel matrix"))?;
    let apply = |x: &CVec<T>| -> Result<CVec<T>> {
        let mut y = CVec::zeros(x.len());
        for r in rx {
            y.add_scaled(Complex::new(T::one(), T::zero()), &axpy_outer(x, r.h, r.beta)?);
        }
        Ok(y)
    };
    let tol = T::of(POWER_ITER_TOL);
    let mut eig = T::zero();
    for _ in 0..POWER_ITER_MAX {
        let y = apply(&x)?;
        // Rayleigh quotient x^H A x with ||x|| = 1
        let next_eig = cdot_unchecked(&x, &y).re;
        let norm = cnorm(&y);
        if !(norm > T::zero()) {
            return Err(Error::DegenerateChannel("zero channel matrix"));
        }
        x = y.scaled(T::one() / norm);
        if (next_eig - eig).abs() <= tol * next_eig.abs() {
            break;
        }
        eig = next_eig;
    }
    Ok(x)
}

/// Which direction rule fills a [`BeamPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamRule {
    Asymptotic,
    /// MRT per message; messages are expected to have single-user audiences.
    MrtUnicast,
    MrtMulticast(MulticastMrt),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamEntry<T> {
    pub direction: CVec<T>,
    pub quote: PowerQuote<T>,
}

/// Directions and quotes for every (message, subcarrier) pair.
///
/// Pairs whose direction misses some audience member carry an infinite quote.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPlan<T> {
    pub entries: Vec<Vec<BeamEntry<T>>>,
}

impl<T: Real> BeamPlan<T> {
    pub fn quote(&self, message: usize, subcarrier: usize) -> T {
        self.entries[message][subcarrier].quote.0
    }

    /// Quotes as a `[message][subcarrier]` table.
    pub fn quotes(&self) -> Vec<Vec<T>> {
        self.entries.iter().map(|row| row.iter().map(|e| e.quote.0).collect()).collect()
    }
}

pub fn plan_beams<T: Real>(chan: &ChannelState<T>, messages: &[Message], rule: BeamRule) -> Result<BeamPlan<T>> {
    let scale = chan.snr_scale();
    let mut entries = Vec::with_capacity(messages.len());
    for msg in messages {
        let mut row = Vec::with_capacity(chan.subcarriers);
        for n in 0..chan.subcarriers {
            let rx = audience_channels(chan, n, msg.audience);
            let direction = match rule {
                BeamRule::Asymptotic => asymptotic_beam(&rx, scale).map(|(w, _)| w),
                BeamRule::MrtUnicast => {
                    if rx.len() != 1 {
                        return Err(Error::InvalidConfig("unicast MRT needs single-user messages".into()));
                    }
                    mrt_unicast(rx[0].h)
                }
                BeamRule::MrtMulticast(kind) => mrt_multicast_with(&rx, kind),
            };
            let entry = match direction {
                Ok(w) => {
                    let quote = quote_for(&w, &rx, scale).unwrap_or_else(|_| PowerQuote::infinite());
                    BeamEntry { direction: w, quote }
                }
                Err(Error::DegenerateChannel(_)) => {
                    BeamEntry { direction: CVec::zeros(chan.antennas), quote: PowerQuote::infinite() }
                }
                Err(e) => return Err(e),
            };
            row.push(entry);
        }
        entries.push(row);
    }
    Ok(BeamPlan { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;
    use crate::cxkernel::cdot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn rx<'a>(hs: &'a [CVec<f64>], beta: &[f64]) -> Vec<Receiver<'a, f64>> {
        hs.iter().zip(beta).enumerate().map(|(k, (h, &b))| Receiver { user: k, h, beta: b }).collect()
    }

    #[test]
    fn single_user_is_mrt() {
        let h = vec![CVec(vec![c(1.0, 2.0), c(-0.5, 0.3), c(0.0, -1.0)])];
        let (w, q) = asymptotic_beam(&rx(&h, &[0.7]), 3.0 * 2.0).unwrap();
        let mrt = mrt_unicast(&h[0]).unwrap();
        assert!((cdot(&w, &mrt).unwrap().re - 1.0).abs() < 1e-12);
        let expect = 6.0 / (0.7 * h[0].norm_sqr());
        assert!((q.0 - expect).abs() <= 1e-12 * expect);
        assert_eq!(mrt_multicast(&rx(&h, &[0.7])).unwrap(), mrt);
    }

    #[test]
    fn two_orthogonal_unit_channels() {
        let h = vec![CVec(vec![c(1.0, 0.0), c(0.0, 0.0)]), CVec(vec![c(0.0, 0.0), c(1.0, 0.0)])];
        let (w, q) = asymptotic_beam(&rx(&h, &[1.0, 1.0]), 2.0).unwrap();
        let s = 0.5f64.sqrt();
        assert!((w[0] - c(s, 0.0)).norm() < 1e-15 && (w[1] - c(s, 0.0)).norm() < 1e-15);
        assert!((q.0 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_channels_are_equalised() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            // scaled standard basis vectors with random phases: mutually orthogonal
            let m = 5;
            let norm: f64 = rng.gen_range(0.5..2.0);
            let beta: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..3.0)).collect();
            let hs: Vec<CVec<f64>> = (0..3)
                .map(|k| {
                    let mut v = CVec::zeros(m);
                    v[k] = Complex::from_polar(norm, rng.gen_range(0.0..std::f64::consts::TAU));
                    v
                })
                .collect();
            let r = rx(&hs, &beta);
            let (w, _) = asymptotic_beam(&r, 1.0).unwrap();
            let gains: Vec<f64> = r.iter().map(|x| x.beta * cdot(x.h, &w).unwrap().norm_sqr()).collect();
            for g in &gains {
                assert!((g - gains[0]).abs() <= 1e-9 * gains[0]);
            }
        }
    }

    #[test]
    fn mrt_examples() {
        let h = CVec(vec![c(2.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(mrt_unicast(&h).unwrap(), CVec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        let h = CVec(vec![c(0.3, -1.1), c(2.0, 0.4)]);
        let w = mrt_unicast(&h).unwrap();
        assert!((cnorm(&w) - 1.0).abs() < 1e-15);
        let ip = cdot(&h, &w).unwrap();
        assert!(ip.re > 0.0 && ip.im.abs() < 1e-15);
        assert!(mrt_unicast(&CVec::<f64>::zeros(2)).is_err());
    }

    #[test]
    fn multicast_mrt_eigenstructure() {
        let h1 = CVec(vec![c(0.0, 2.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let h2 = CVec(vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let w = mrt_multicast(&rx(&[h2.clone(), h1.clone()], &[1.0, 1.0])).unwrap();
        assert!((cdot(&h1, &w).unwrap().norm() - 2.0).abs() < 1e-9);

        let twin = vec![h2.clone(), h2.clone()];
        let w = mrt_multicast(&rx(&twin, &[1.0, 1.0])).unwrap();
        assert!((cdot(&w, &h2).unwrap().norm() - 1.0).abs() < 1e-12);

        // the power-iteration result is an eigenvector of the weighted Gram sum
        let st = sample_channel::<f64>(5, 6, 1, 3, &[1.0, 0.5, 2.0], 1.0, 1.0).unwrap();
        let r = audience_channels(&st, 0, UserSet::from_users([0, 1, 2]));
        let w = mrt_multicast(&r).unwrap();
        let mut aw = CVec::zeros(6);
        for x in &r {
            aw.add_scaled(c(1.0, 0.0), &axpy_outer(&w, x.h, x.beta).unwrap());
        }
        let lambda = cdot(&w, &aw).unwrap().re;
        let mut resid = aw.clone();
        resid.add_scaled(c(-lambda, 0.0), &w);
        assert!(cnorm(&resid) < 1e-4 * lambda);
        assert!(mrt_multicast::<f64>(&[]).is_err());
    }

    #[test]
    fn quote_for_orthogonal_direction_is_infeasible() {
        let h = vec![CVec(vec![c(1.0, 0.0), c(0.0, 0.0)]), CVec(vec![c(0.0, 0.0), c(1.0, 0.0)])];
        let w = CVec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(quote_for(&w, &rx(&h, &[1.0, 1.0]), 1.0), Err(Error::InfeasibleDirection { user: 1 })));
    }

    #[test]
    fn bottleneck_identity_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..200u64 {
            let k = rng.gen_range(1..5);
            let beta: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..2.0)).collect();
            let st = sample_channel::<f64>(seed, rng.gen_range(2..9), 1, k, &beta, 1e-9, 39e3).unwrap();
            let r = audience_channels(&st, 0, UserSet::from_users(0..k));
            let scale = st.snr_scale();
            for (w, q) in [
                asymptotic_beam(&r, scale).unwrap(),
                {
                    let w = mrt_multicast(&r).unwrap();
                    let q = quote_for(&w, &r, scale).unwrap();
                    (w, q)
                },
            ] {
                assert!((cnorm(&w) - 1.0).abs() < 1e-12);
                let worst = r.iter().map(|x| x.beta * cdot(x.h, &w).unwrap().norm_sqr()).fold(f64::INFINITY, f64::min);
                assert!((worst * q.0 / scale - 1.0).abs() < 1e-9);
                assert_eq!(quote_for(&w, &r, scale).unwrap(), q);
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let st = sample_channel::<f32>(1, 4, 2, 2, &[1.0, 1.0], 1e-3, 1.0).unwrap();
        let r = audience_channels(&st, 1, UserSet::from_users([0, 1]));
        let (w, q) = asymptotic_beam(&r, st.snr_scale()).unwrap();
        assert!((cnorm(&w) - 1.0).abs() < 1e-5);
        assert!(q.0 > 0.0 && q.0.is_finite());
    }
}
