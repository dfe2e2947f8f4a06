use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{Waveform, CHANNELS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarpConfig {
    /// Scale of the log-speed perturbation at each knot.
    pub strength: f64,
    pub knots: usize,
}

impl Default for WarpConfig {
    fn default() -> Self {
        Self {
            strength: 0.2,
            knots: 4,
        }
    }
}

impl WarpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(Error::Config(format!("warp strength must be >= 0, got {}", self.strength)));
        }
        Ok(())
    }
}

/// Shape-preserving cubic (Fritsch-Carlson) through `(xs, ys)`.
struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d = vec![delta[0]; 2];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = Self::end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = Self::end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Self { xs, ys, d }
    }

    fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let k = match self.xs.iter().rposition(|&k| k <= x) {
            Some(k) => k.min(self.xs.len() - 2),
            None => 0,
        };
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[k]
            + (t3 - 2.0 * t2 + t) * h * self.d[k]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[k + 1]
            + (t3 - t2) * h * self.d[k + 1]
    }
}

/// Monotone map `phi` on `0..len` with `phi(0) = 0` and `phi(len-1) = len-1`:
/// the integral of a PCHIP-interpolated speed curve whose knot values are
/// `exp(strength * z)`.
pub fn warp_map(len: usize, cfg: &WarpConfig, seed: u64) -> Vec<f64> {
    if len < 2 || cfg.strength == 0.0 || cfg.knots < 2 {
        return (0..len).map(|t| t as f64).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = (len - 1) as f64;
    let xs: Vec<f64> = (0..cfg.knots).map(|i| span * i as f64 / (cfg.knots - 1) as f64).collect();
    let ys: Vec<f64> = (0..cfg.knots)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (cfg.strength * z).exp()
        })
        .collect();
    let speed = Pchip::new(xs, ys);
    let s: Vec<f64> = (0..len).map(|t| speed.eval(t as f64)).collect();
    let mut phi = vec![0.0; len];
    for t in 1..len {
        phi[t] = phi[t - 1] + 0.5 * (s[t - 1] + s[t]);
    }
    let scale = span / phi[len - 1];
    phi.iter_mut().for_each(|p| *p *= scale);
    phi[len - 1] = span;
    phi
}

/// Catmull-Rom interpolation of `x` at fractional position `u`, clamped at
/// the ends.
fn catmull_rom(x: &[f32], u: f64) -> f32 {
    let n = x.len() as isize;
    let i = u.floor() as isize;
    let f = u - i as f64;
    let at = |k: isize| x[k.clamp(0, n - 1) as usize] as f64;
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let v = p1
        + 0.5
            * f
            * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)));
    v as f32
}

/// Resamples each channel of `samples` at the positions in `phi`.
pub fn apply_warp(samples: &[f32], channels: usize, phi: &[f64]) -> Vec<f32> {
    let len = samples.len() / channels;
    let mut out = Vec::with_capacity(samples.len());
    for c in 0..channels {
        let row = &samples[c * len..(c + 1) * len];
        out.extend(phi.iter().map(|&u| catmull_rom(row, u)));
    }
    out
}

/// Time-warped copy of a record. The onset moves to the first output
/// sample whose source position reaches the original onset.
pub fn time_warp(w: &Waveform, cfg: &WarpConfig, seed: u64) -> Result<Waveform> {
    cfg.validate()?;
    if cfg.strength == 0.0 {
        return Ok(w.clone());
    }
    let phi = warp_map(w.len(), cfg, seed);
    let samples = apply_warp(w.samples(), CHANNELS, &phi);
    let onset = w
        .onset_index
        .map(|o| phi.iter().position(|&p| p >= o as f64).unwrap_or(w.len() - 1));
    Waveform::new(w.id.clone(), samples, w.sample_rate_hz, w.label, onset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::Label;

    fn record() -> Waveform {
        let s: Vec<f32> = (0..9000).map(|i| ((i % 3000) as f32 * 0.01).sin()).collect();
        Waveform::new("w", s, 100.0, Some(Label::Event), Some(1200)).unwrap()
    }

    #[test]
    fn zero_strength_is_identity() {
        let w = record();
        let cfg = WarpConfig { strength: 0.0, ..Default::default() };
        assert_eq!(time_warp(&w, &cfg, 3).unwrap(), w);
        let phi = warp_map(100, &cfg, 3);
        assert_eq!(apply_warp(w.channel(0), 1, &(0..3000).map(|t| t as f64).collect::<Vec<_>>()), w.channel(0));
        assert_eq!(phi[99], 99.0);
    }

    #[test]
    fn output_length_and_determinism() {
        let w = record();
        let a = time_warp(&w, &WarpConfig::default(), 5).unwrap();
        assert_eq!(a.len(), 3000);
        assert_eq!(a, time_warp(&w, &WarpConfig::default(), 5).unwrap());
        assert_ne!(a, time_warp(&w, &WarpConfig::default(), 6).unwrap());
        assert_ne!(a.samples(), w.samples());
        let onset = a.onset_index.unwrap();
        assert!(onset.abs_diff(1200) < 600);
    }

    #[test]
    fn map_is_strictly_increasing() {
        for strength in [0.2, 0.5] {
            let cfg = WarpConfig { strength, knots: 4 };
            for seed in 0..1000 {
                let phi = warp_map(3000, &cfg, seed);
                assert_eq!(phi[0], 0.0);
                assert_eq!(phi[2999], 2999.0);
                assert!(phi.windows(2).all(|p| p[1] > p[0]), "seed {seed}");
            }
        }
    }

    #[test]
    fn pchip_interpolates_knots_and_stays_in_range() {
        let p = Pchip::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 0.5, 0.6]);
        for (x, y) in [(0.0, 1.0), (1.0, 2.0), (2.0, 0.5), (3.0, 0.6)] {
            assert!((p.eval(x) - y).abs() < 1e-12);
        }
        for i in 0..=300 {
            let v = p.eval(i as f64 / 100.0);
            assert!((0.5 - 1e-12..=2.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn catmull_rom_hits_samples_and_lines() {
        let x = [0.0f32, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(catmull_rom(&x, 2.0), 2.0);
        assert!((catmull_rom(&x, 1.5) - 1.5).abs() < 1e-6);
    }

    #[test]
    fn negative_strength_rejected() {
        assert!(time_warp(&record(), &WarpConfig { strength: -0.1, knots: 4 }, 0).is_err());
    }
}
