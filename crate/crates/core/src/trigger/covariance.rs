use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerConfig {
    /// Width of the Gaussian lag weight.
    pub sigma0_seconds: f64,
    /// Extent of the covariance profile on each side of lag zero.
    pub max_lag_seconds: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            sigma0_seconds: 2.5,
            max_lag_seconds: 12.0,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0_seconds > 0.0 && self.sigma0_seconds.is_finite()) {
            return Err(Error::Config(format!("sigma0_seconds must be > 0, got {}", self.sigma0_seconds)));
        }
        if !(self.max_lag_seconds >= 3.0 * self.sigma0_seconds) {
            return Err(Error::Config(format!(
                "max_lag_seconds {} must cover 3 sigma0 ({})",
                self.max_lag_seconds,
                3.0 * self.sigma0_seconds
            )));
        }
        Ok(())
    }

    /// Profile half-width in latent steps.
    pub fn max_lag_steps(&self, latent_rate_hz: f64) -> usize {
        (self.max_lag_seconds * latent_rate_hz).round() as usize
    }
}

/// Channel-averaged covariance for lags `-max_lag..=max_lag`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceProfile {
    pub values: Vec<f64>,
    pub max_lag: usize,
    pub latent_rate_hz: f64,
}

impl CovarianceProfile {
    pub fn at(&self, lag: isize) -> f64 {
        self.values[(lag + self.max_lag as isize) as usize]
    }

    pub fn lag_seconds(&self, index: usize) -> f64 {
        (index as f64 - self.max_lag as f64) / self.latent_rate_hz
    }

    /// Elementwise mean of profiles sharing one lag grid.
    pub fn mean(profiles: &[CovarianceProfile]) -> Result<CovarianceProfile> {
        let first = profiles.first().ok_or_else(|| Error::Empty("no profiles to average".into()))?;
        let mut values = vec![0.0; first.values.len()];
        for p in profiles {
            if p.values.len() != values.len() {
                return Err(Error::Shape("profiles have different lag ranges".into()));
            }
            values.iter_mut().zip(&p.values).for_each(|(a, b)| *a += b);
        }
        values.iter_mut().for_each(|v| *v /= profiles.len() as f64);
        Ok(CovarianceProfile {
            values,
            max_lag: first.max_lag,
            latent_rate_hz: first.latent_rate_hz,
        })
    }
}

fn centred<T: Real>(row: &[T]) -> Vec<f64> {
    let m = row.iter().map(|v| v.as_f64()).sum::<f64>() / row.len() as f64;
    row.iter().map(|v| v.as_f64() - m).collect()
}

/// `cov_c(tau) = (1/N) sum_t a_c(t) b_c(t + tau)` on per-channel centred
/// inputs, zero outside the window, averaged over channels. Inputs are
/// `(channels, len)` row-major.
pub fn cross_covariance<T: Real>(
    a: &[T],
    b: &[T],
    channels: usize,
    len: usize,
    max_lag: usize,
    latent_rate_hz: f64,
) -> Result<CovarianceProfile> {
    if a.len() != channels * len || b.len() != channels * len {
        return Err(Error::Shape(format!(
            "cross_covariance: expected {channels}x{len} inputs, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if channels == 0 || max_lag >= len {
        return Err(Error::InvalidArgument(format!(
            "cross_covariance: max_lag {max_lag} must be below length {len} with at least one channel"
        )));
    }
    let width = 2 * max_lag + 1;
    let mut values = vec![0.0; width];
    for c in 0..channels {
        let ac = centred(&a[c * len..(c + 1) * len]);
        let bc = centred(&b[c * len..(c + 1) * len]);
        for (i, v) in values.iter_mut().enumerate() {
            let lag = i as isize - max_lag as isize;
            let (a_part, b_part) = if lag >= 0 {
                (&ac[..len - lag as usize], &bc[lag as usize..])
            } else {
                (&ac[(-lag) as usize..], &bc[..len - (-lag) as usize])
            };
            *v += a_part.iter().zip(b_part).map(|(x, y)| x * y).sum::<f64>();
        }
    }
    let norm = (channels * len) as f64;
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(CovarianceProfile {
        values,
        max_lag,
        latent_rate_hz,
    })
}

/// Index pairs averaged by [`pairwise_mean_profile`].
pub fn profile_pairs(k: usize, include_self: bool) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i..k {
            if i != j || include_self {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Mean cross-covariance over unordered pairs `i < j` (and `i == j` when
/// `include_self`).
pub fn pairwise_mean_profile<T: Real>(
    latents: &[&[T]],
    channels: usize,
    len: usize,
    include_self: bool,
    max_lag: usize,
    latent_rate_hz: f64,
) -> Result<CovarianceProfile> {
    if latents.is_empty() {
        return Err(Error::Empty("pairwise_mean_profile: no latents".into()));
    }
    let pairs = profile_pairs(latents.len(), include_self);
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "pairwise_mean_profile: one latent without self pairs leaves nothing to average".into(),
        ));
    }
    let profiles = pairs
        .iter()
        .map(|&(i, j)| cross_covariance(latents[i], latents[j], channels, len, max_lag, latent_rate_hz))
        .collect::<Result<Vec<_>>>()?;
    CovarianceProfile::mean(&profiles)
}

/// `exp(-(tau / r)^2 / (2 sigma0^2))` over the profile's lag grid.
pub fn gaussian_weights(max_lag: usize, latent_rate_hz: f64, sigma0_seconds: f64) -> Vec<f64> {
    (0..2 * max_lag + 1)
        .map(|i| {
            let secs = (i as f64 - max_lag as f64) / latent_rate_hz;
            (-(secs * secs) / (2.0 * sigma0_seconds * sigma0_seconds)).exp()
        })
        .collect()
}

/// Gaussian-weighted mean of the profile around lag zero.
pub fn gaussian_score(profile: &CovarianceProfile, cfg: &TriggerConfig) -> f64 {
    let w = gaussian_weights(profile.max_lag, profile.latent_rate_hz, cfg.sigma0_seconds);
    let num: f64 = w.iter().zip(&profile.values).map(|(w, p)| w * p).sum();
    num / w.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Double loop straight from the definition.
    fn oracle(a: &[f64], b: &[f64], c: usize, n: usize, l: usize) -> Vec<f64> {
        let mut out = vec![0.0; 2 * l + 1];
        for ch in 0..c {
            let ma = a[ch * n..(ch + 1) * n].iter().sum::<f64>() / n as f64;
            let mb = b[ch * n..(ch + 1) * n].iter().sum::<f64>() / n as f64;
            for (i, o) in out.iter_mut().enumerate() {
                let tau = i as isize - l as isize;
                for t in 0..n as isize {
                    let s = t + tau;
                    if s >= 0 && s < n as isize {
                        *o += (a[ch * n + t as usize] - ma) * (b[ch * n + s as usize] - mb) / n as f64;
                    }
                }
            }
        }
        out.iter().map(|v| v / c as f64).collect()
    }

    #[test]
    fn hand_values() {
        let a = [1.0, -1.0, 1.0, -1.0];
        let p = cross_covariance(&a, &a, 1, 4, 1, 1.0).unwrap();
        assert!((p.at(0) - 1.0).abs() < 1e-12);
        assert!((p.at(1) + 0.75).abs() < 1e-12);
        assert!((p.at(-1) + 0.75).abs() < 1e-12);
    }

    #[test]
    fn constant_input_gives_zero() {
        let a = [3.0f32; 10];
        let p = cross_covariance(&a, &a, 2, 5, 2, 1.0).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_lag_is_mean_variance() {
        let a = [1.0, 2.0, 3.0, 0.0, 0.0, 6.0];
        let p = cross_covariance(&a, &a, 2, 3, 0, 1.0).unwrap();
        assert!((p.values[0] - (2.0 / 3.0 + 8.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn argument_errors() {
        assert!(cross_covariance(&[0.0; 4], &[0.0; 3], 1, 4, 1, 1.0).is_err());
        assert!(cross_covariance(&[0.0; 4], &[0.0; 4], 1, 4, 4, 1.0).is_err());
        assert!(pairwise_mean_profile::<f64>(&[], 1, 4, true, 1, 1.0).is_err());
        assert!(pairwise_mean_profile(&[&[0.0f64; 4][..]], 1, 4, false, 1, 1.0).is_err());
    }

    #[test]
    fn matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let c = rng.random_range(1..=8);
            let n = rng.random_range(2..=64);
            let l = rng.random_range(0..n.min(17));
            let a: Vec<f64> = (0..c * n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..c * n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = cross_covariance(&a, &b, c, n, l, 1.0).unwrap();
            for (x, y) in p.values.iter().zip(oracle(&a, &b, c, n, l)) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pairs() {
        assert_eq!(profile_pairs(3, false), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(profile_pairs(2, true), vec![(0, 0), (0, 1), (1, 1)]);
        assert_eq!(profile_pairs(1, true), vec![(0, 0)]);
    }

    #[test]
    fn pairwise_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z: Vec<Vec<f64>> = (0..3).map(|_| (0..40).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let auto = cross_covariance(&z[0], &z[0], 2, 20, 5, 1.0).unwrap();
        let one = pairwise_mean_profile(&[&z[0][..]], 2, 20, true, 5, 1.0).unwrap();
        assert_eq!(one, auto);
        let same = pairwise_mean_profile(&[&z[0][..], &z[0][..], &z[0][..]], 2, 20, false, 5, 1.0).unwrap();
        for (a, b) in same.values.iter().zip(&auto.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let refs: Vec<&[f64]> = z.iter().map(|v| &v[..]).collect();
        let mixed = pairwise_mean_profile(&refs, 2, 20, false, 5, 1.0).unwrap();
        let o01 = oracle(&z[0], &z[1], 2, 20, 5);
        let o02 = oracle(&z[0], &z[2], 2, 20, 5);
        let o12 = oracle(&z[1], &z[2], 2, 20, 5);
        for i in 0..11 {
            assert!((mixed.values[i] - (o01[i] + o02[i] + o12[i]) / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_score_hand_value() {
        let p = CovarianceProfile {
            values: vec![0.0, 0.0, 1.0, 0.0, 0.0],
            max_lag: 2,
            latent_rate_hz: 1.0,
        };
        let w = gaussian_weights(2, 1.0, 2.5);
        assert!((w[0] - 0.726).abs() < 1e-3 && (w[1] - 0.923).abs() < 1e-3);
        assert!((gaussian_score(&p, &TriggerConfig::default()) - 1.0 / 4.298).abs() < 1e-3);
        let flat = CovarianceProfile { values: vec![1.5; 5], ..p.clone() };
        assert!((gaussian_score(&flat, &TriggerConfig::default()) - 1.5).abs() < 1e-12);
        let zero = CovarianceProfile { values: vec![0.0; 5], ..p };
        assert_eq!(gaussian_score(&zero, &TriggerConfig::default()), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(TriggerConfig::default().validate().is_ok());
        assert_eq!(TriggerConfig::default().max_lag_steps(6.25), 75);
        assert!(TriggerConfig { sigma0_seconds: 0.0, ..Default::default() }.validate().is_err());
        assert!(TriggerConfig { max_lag_seconds: 7.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn autocovariance_is_even(v in prop::collection::vec(-5.0f64..5.0, 24), l in 0usize..12) {
            let p = cross_covariance(&v, &v, 2, 12, l, 1.0).unwrap();
            for tau in 0..=l as isize {
                prop_assert!((p.at(tau) - p.at(-tau)).abs() < 1e-6);
            }
        }

        #[test]
        fn score_is_linear(p in prop::collection::vec(-3.0f64..3.0, 11), q in prop::collection::vec(-3.0f64..3.0, 11),
                           a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let cfg = TriggerConfig::default();
            let mk = |values: Vec<f64>| CovarianceProfile { values, max_lag: 5, latent_rate_hz: 2.0 };
            let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + b * y).collect();
            let lhs = gaussian_score(&mk(mix), &cfg);
            let rhs = a * gaussian_score(&mk(p), &cfg) + b * gaussian_score(&mk(q), &cfg);
            prop_assert!((lhs - rhs).abs() < 1e-6);
        }
    }
}
