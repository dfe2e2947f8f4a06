//! Zero-phase Butterworth band-pass.
//!
//! The analog low-pass prototype is mapped to a band-pass, discretized with
//! the bilinear transform (pre-warped band edges), and run as cascaded
//! biquads forward and backward over an odd-reflected extension of the
//! signal.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Reflection padding on each side before forward-backward filtering.
pub const FILTER_PAD: usize = 300;

/// Cascaded second-order sections, `[b0, b1, b2, a1, a2]` with `a0 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Butterworth {
    sections: Vec<[f64; 5]>,
}

impl Butterworth {
    /// Band-pass from an order-`order` low-pass prototype (2·order poles).
    pub fn bandpass(order: usize, lo_hz: f64, hi_hz: f64, fs: f64) -> Result<Self> {
        if !(order > 0 && fs > 0.0 && lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "band-pass needs 0 < lo < hi < fs/2, got lo={lo_hz} hi={hi_hz} fs={fs}"
            )));
        }
        let fs2 = 2.0 * fs;
        let w_lo = fs2 * (std::f64::consts::PI * lo_hz / fs).tan();
        let w_hi = fs2 * (std::f64::consts::PI * hi_hz / fs).tan();
        let bw = w_hi - w_lo;
        let w0_sq = w_lo * w_hi;

        let mut poles = Vec::with_capacity(2 * order);
        for m in 0..order {
            let theta = std::f64::consts::PI * (2 * m + 1 + order) as f64 / (2 * order) as f64;
            let p = Complex64::from_polar(1.0, theta);
            let p_lp = p * (bw / 2.0);
            let disc = (p_lp * p_lp - w0_sq).sqrt();
            poles.push(p_lp + disc);
            poles.push(p_lp - disc);
        }

        // Analog zeros: `order` at s = 0; the rest at infinity.
        let fs2c = Complex64::new(fs2, 0.0);
        let mut gain = Complex64::new(bw.powi(order as i32), 0.0);
        for _ in 0..order {
            gain *= fs2c;
        }
        for &p in &poles {
            gain /= fs2c - p;
        }
        let digital: Vec<Complex64> = poles.iter().map(|&p| (fs2c + p) / (fs2c - p)).collect();

        let mut upper: Vec<Complex64> = digital.into_iter().filter(|p| p.im > 0.0).collect();
        if upper.len() != order {
            return Err(Error::InvalidArgument(
                "band too narrow for a complex-pole cascade".into(),
            ));
        }
        upper.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());

        let sections = upper
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let k = if i == 0 { gain.re } else { 1.0 };
                // Zeros at z = +1 and z = -1.
                [k, 0.0, -k, -2.0 * p.re, p.norm_sqr()]
            })
            .collect();
        Ok(Self { sections })
    }

    pub fn sections(&self) -> &[[f64; 5]] {
        &self.sections
    }

    /// Steady-state biquad states for a unit step input.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|&[b0, b1, b2, a1, a2]| {
                let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
                let z2 = (b2 - a2 * dc) * scale;
                let z1 = (b1 - a1 * dc) * scale + z2;
                scale *= dc;
                [z1, z2]
            })
            .collect()
    }

    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let zi = self.step_states();
        for (&[b0, b1, b2, a1, a2], z) in self.sections.iter().zip(zi) {
            let (mut z1, mut z2) = (z[0] * x0, z[1] * x0);
            for v in x.iter_mut() {
                let xin = *v;
                let y = b0 * xin + z1;
                z1 = b1 * xin - a1 * y + z2;
                z2 = b2 * xin - a2 * y;
                *v = y;
            }
        }
    }

    /// Zero-phase forward-backward filtering with odd reflection padding.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = FILTER_PAD.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        self.run(&mut ext);
        ext.reverse();
        self.run(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Filters one channel with the 4th-order zero-phase band-pass.
pub fn bandpass_channel(x: &[f32], fs: f64, lo: f64, hi: f64) -> Result<Vec<f32>> {
    let filt = Butterworth::bandpass(4, lo, hi, fs)?;
    let xs: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    Ok(filt.filtfilt(&xs).into_iter().map(|v| v as f32).collect())
}

/// Channel-major `(channels, n)` band-pass; output has the input's shape.
pub fn bandpass(signal: &[f32], channels: usize, fs: f64, lo: f64, hi: f64) -> Result<Vec<f32>> {
    if channels == 0 || signal.len() % channels != 0 {
        return Err(Error::Shape(format!(
            "{} values do not split into {channels} channels",
            signal.len()
        )));
    }
    let filt = Butterworth::bandpass(4, lo, hi, fs)?;
    let n = signal.len() / channels;
    let mut out = Vec::with_capacity(signal.len());
    for ch in signal.chunks(n.max(1)) {
        let xs: Vec<f64> = ch.iter().map(|&v| v as f64).collect();
        out.extend(filt.filtfilt(&xs).into_iter().map(|v| v as f32));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f32> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin() as f32).collect()
    }

    fn interior_amplitude(x: &[f32]) -> f64 {
        let mid = &x[500..x.len() - 500];
        let rms = (mid.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / mid.len() as f64).sqrt();
        rms * 2f64.sqrt()
    }

    /// Magnitude response from the biquads evaluated on the unit circle.
    fn response(f: &Butterworth, freq: f64, fs: f64) -> f64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * freq / fs);
        let zi = z.inv();
        f.sections()
            .iter()
            .map(|&[b0, b1, b2, a1, a2]| {
                ((b0 + b1 * zi + b2 * zi * zi) / (1.0 + a1 * zi + a2 * zi * zi)).norm()
            })
            .product()
    }

    #[test]
    fn analytic_response_shape() {
        let f = Butterworth::bandpass(4, 1.0, 20.0, 100.0).unwrap();
        assert_eq!(f.sections().len(), 4);
        // Unit gain at the (pre-warped) band centre, -3 dB at the edges.
        let centre = 100.0 / PI * ((PI * 1.0 / 100.0).tan() * (PI * 20.0 / 100.0).tan()).sqrt().atan();
        assert!((response(&f, centre, 100.0) - 1.0).abs() < 1e-9);
        for edge in [1.0, 20.0] {
            assert!((response(&f, edge, 100.0) - 0.5f64.sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn passband_sine_preserved() {
        let x = sine(10.0, 100.0, 3000);
        let y = bandpass_channel(&x, 100.0, 1.0, 20.0).unwrap();
        let ratio = interior_amplitude(&y) / interior_amplitude(&x);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn stopband_sine_removed() {
        let x = sine(0.1, 100.0, 3000);
        let y = bandpass_channel(&x, 100.0, 1.0, 20.0).unwrap();
        let peak = y.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!(peak < 0.05, "peak {peak}");
    }

    #[test]
    fn zero_and_constant_in_zero_out() {
        assert!(bandpass_channel(&[0.0; 500], 100.0, 1.0, 20.0).unwrap().iter().all(|&v| v == 0.0));
        let y = bandpass_channel(&[3.5; 500], 100.0, 1.0, 20.0).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn invalid_band() {
        assert!(Butterworth::bandpass(4, 20.0, 1.0, 100.0).is_err());
        assert!(Butterworth::bandpass(4, 1.0, 50.0, 100.0).is_err());
        assert!(Butterworth::bandpass(4, 0.0, 20.0, 100.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn linear(
            xs in proptest::collection::vec(-1.0f32..1.0, 400),
            ys in proptest::collection::vec(-1.0f32..1.0, 400),
            a in -3.0f32..3.0,
            b in -3.0f32..3.0,
        ) {
            let mix: Vec<f32> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let fx = bandpass_channel(&xs, 100.0, 1.0, 20.0).unwrap();
            let fy = bandpass_channel(&ys, 100.0, 1.0, 20.0).unwrap();
            let fm = bandpass_channel(&mix, 100.0, 1.0, 20.0).unwrap();
            let scale = fm.iter().fold(1e-3f32, |m, v| m.max(v.abs()));
            for i in 0..400 {
                let want = a * fx[i] + b * fy[i];
                prop_assert!((fm[i] - want).abs() <= 1e-4 * scale);
            }
        }
    }
}
