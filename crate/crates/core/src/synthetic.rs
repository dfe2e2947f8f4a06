//! Labeled desk-scale datasets: colored noise, optionally carrying a
//! two-arrival transient scaled to a target post-filter SNR.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{bandpass, write_container, write_manifest, Label, Waveform, CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpectrum {
    White,
    /// Power falling as 1/f.
    Brownish,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_event: usize,
    pub n_noise: usize,
    pub snr_range: (f64, f64),
    pub onset_range_seconds: (f64, f64),
    pub noise_spectrum: NoiseSpectrum,
    pub glitch_fraction: f64,
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub window_seconds: f64,
    /// Band used to measure SNR; matches the preprocessing band.
    pub snr_band_hz: (f64, f64),
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_event: 1000,
            n_noise: 1000,
            snr_range: (2.0, 10.0),
            onset_range_seconds: (5.0, 20.0),
            noise_spectrum: NoiseSpectrum::Brownish,
            glitch_fraction: 0.02,
            seed: 0,
            sample_rate_hz: 100.0,
            window_seconds: 30.0,
            snr_band_hz: (1.0, 20.0),
            id_prefix: "syn".into(),
        }
    }
}

/// Post-onset window over which signal RMS is measured.
pub const SNR_WINDOW_SECONDS: f64 = 5.0;
/// Glitch amplitude in units of channel standard deviation.
pub const GLITCH_SCALE: f64 = 10.0;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.snr_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!("snr_range ({lo}, {hi}) needs 0 < lo <= hi")));
        }
        let (a, b) = self.onset_range_seconds;
        if !(0.0 <= a && a <= b && b < self.window_seconds) {
            return Err(Error::Config(format!(
                "onset_range_seconds ({a}, {b}) must lie inside the {} s window",
                self.window_seconds
            )));
        }
        if !(0.0..=1.0).contains(&self.glitch_fraction) {
            return Err(Error::Config(format!("glitch_fraction {} not in [0, 1]", self.glitch_fraction)));
        }
        if !(self.sample_rate_hz > 0.0 && self.window_seconds > 0.0) {
            return Err(Error::Config("sample rate and window must be positive".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_seconds * self.sample_rate_hz).round() as usize
    }

    pub fn total(&self) -> usize {
        self.n_event + self.n_noise
    }

    fn rng(&self, k: usize, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((k as u64) << 4 | stream);
        rng
    }
}

/// Noise and signal components of an event record, before summation.
#[derive(Clone, Debug)]
pub struct EventParts {
    pub noise: Vec<f32>,
    pub signal: Vec<f32>,
    pub onset_index: usize,
    pub target_snr: f64,
    pub glitch: bool,
}

fn colored_noise<R: Rng>(n: usize, spectrum: NoiseSpectrum, fs: f64, rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    if spectrum == NoiseSpectrum::Brownish {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(n).process(&mut buf);
        for (i, c) in buf.iter_mut().enumerate() {
            let bin = i.min(n - i);
            let f = (bin as f64 * fs / n as f64).max(0.5);
            *c *= 1.0 / f.sqrt();
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        x = buf.iter().map(|c| c.re).collect();
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    x.iter().map(|v| (v - mean) / std).collect()
}

/// Three noise channels with per-channel gains; optionally one glitch.
fn noise_channels<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> (Vec<f64>, bool) {
    let n = cfg.window_samples();
    let level = 10f64.powf(rng.random_range(-1.0..1.0));
    let mut out = Vec::with_capacity(CHANNELS * n);
    for _ in 0..CHANNELS {
        let gain = level * rng.random_range(0.7..1.3);
        out.extend(
            colored_noise(n, cfg.noise_spectrum, cfg.sample_rate_hz, rng)
                .into_iter()
                .map(|v| v * gain),
        );
    }
    let glitch = rng.random::<f64>() < cfg.glitch_fraction;
    if glitch {
        let c = rng.random_range(0..CHANNELS);
        let t = rng.random_range(0..n);
        let ch = &mut out[c * n..(c + 1) * n];
        let std = (ch.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        ch[t] = sign * GLITCH_SCALE * std;
    }
    (out, glitch)
}

fn ricker(t: f64, fc: f64) -> f64 {
    let a = (std::f64::consts::PI * fc * t).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

/// One arrival: a Ricker pulse followed by an exponentially decaying coda.
fn arrival<R: Rng>(n: usize, fs: f64, start: usize, pattern: [f64; 3], rng: &mut R, out: &mut [f64]) {
    use std::f64::consts::PI;
    let fc: f64 = rng.random_range(2.0..10.0);
    let delay = 1.2 / fc;
    let decay = rng.random_range(1.0..4.0);
    let coda_amp = rng.random_range(0.3..0.7);
    let tones: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            let f: f64 = (fc * rng.random_range(0.6..1.4)).clamp(1.5, 15.0);
            (f, rng.random_range(0.0..2.0 * PI), rng.random_range(0.5..1.0))
        })
        .collect();
    // Each channel gets its own coda phase so components are not copies.
    let phase_shift: [f64; 3] = [0.0, rng.random_range(0.0..PI), rng.random_range(0.0..PI)];
    for c in 0..CHANNELS {
        let ch = &mut out[c * n..(c + 1) * n];
        for (i, v) in ch.iter_mut().enumerate().skip(start) {
            let t = (i - start) as f64 / fs;
            let pulse = ricker(t - delay, fc);
            let env = (-t / decay).exp() * (1.0 - (-t / 0.1).exp());
            let coda: f64 = tones
                .iter()
                .map(|&(f, ph, a)| a * (2.0 * PI * f * t + ph + phase_shift[c]).sin())
                .sum::<f64>()
                * 0.5;
            *v += pattern[c] * (pulse + coda_amp * env * coda);
        }
    }
}

fn rms(x: &[f32]) -> f64 {
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Post-filter SNR: signal RMS over the post-onset window divided by the
/// noise RMS over the whole window, both across all channels.
pub fn measure_snr(cfg: &SynthConfig, noise: &[f32], signal: &[f32], onset: usize) -> Result<f64> {
    let (lo, hi) = cfg.snr_band_hz;
    let n = noise.len() / CHANNELS;
    let bn = bandpass(noise, CHANNELS, cfg.sample_rate_hz, lo, hi)?;
    let bs = bandpass(signal, CHANNELS, cfg.sample_rate_hz, lo, hi)?;
    let end = (onset + (SNR_WINDOW_SECONDS * cfg.sample_rate_hz) as usize).min(n);
    let windowed: Vec<f32> = (0..CHANNELS).flat_map(|c| bs[c * n + onset..c * n + end].iter().copied()).collect();
    Ok(rms(&windowed) / rms(&bn))
}

pub fn generate_noise(cfg: &SynthConfig, k: usize) -> Result<Waveform> {
    let mut rng = cfg.rng(k, 1);
    let (noise, _) = noise_channels(cfg, &mut rng);
    Waveform::new(
        format!("{}-{k:06}", cfg.id_prefix),
        noise.into_iter().map(|v| v as f32).collect(),
        cfg.sample_rate_hz,
        Some(Label::Noise),
        None,
    )
}

pub fn generate_event_parts(cfg: &SynthConfig, k: usize) -> Result<EventParts> {
    let mut rng = cfg.rng(k, 2);
    let n = cfg.window_samples();
    let fs = cfg.sample_rate_hz;
    let (noise, glitch) = noise_channels(cfg, &mut rng);
    let (a, b) = cfg.onset_range_seconds;
    let onset = ((rng.random_range(a..=b) * fs).round() as usize).min(n - 1);
    let second = (onset + (rng.random_range(1.0..5.0) * fs) as usize).min(n - 1);

    let sign = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
    let p_pattern = [
        sign(&mut rng) * rng.random_range(0.2..0.5),
        sign(&mut rng) * rng.random_range(0.2..0.5),
        sign(&mut rng),
    ];
    let s_rel = rng.random_range(1.2..2.5);
    let s_pattern = [
        sign(&mut rng) * s_rel,
        sign(&mut rng) * s_rel * rng.random_range(0.6..1.0),
        sign(&mut rng) * s_rel * rng.random_range(0.1..0.4),
    ];
    let mut signal = vec![0.0; CHANNELS * n];
    arrival(n, fs, onset, p_pattern, &mut rng, &mut signal);
    arrival(n, fs, second, s_pattern, &mut rng, &mut signal);

    let target_snr = rng.random_range(cfg.snr_range.0..=cfg.snr_range.1);
    let noise: Vec<f32> = noise.into_iter().map(|v| v as f32).collect();
    let signal: Vec<f32> = signal.into_iter().map(|v| v as f32).collect();
    let measured = measure_snr(cfg, &noise, &signal, onset)?;
    let scale = (target_snr / measured) as f32;
    Ok(EventParts {
        noise,
        signal: signal.into_iter().map(|v| v * scale).collect(),
        onset_index: onset,
        target_snr,
        glitch,
    })
}

pub fn generate_event(cfg: &SynthConfig, k: usize) -> Result<Waveform> {
    let parts = generate_event_parts(cfg, k)?;
    let samples = parts.noise.iter().zip(&parts.signal).map(|(a, b)| a + b).collect();
    Waveform::new(
        format!("{}-{k:06}", cfg.id_prefix),
        samples,
        cfg.sample_rate_hz,
        Some(Label::Event),
        Some(parts.onset_index),
    )
}

/// Which record indices carry events; a seeded shuffle interleaves the two
/// classes so id order is uninformative.
pub fn event_mask(cfg: &SynthConfig) -> Vec<bool> {
    let mut mask: Vec<bool> = (0..cfg.total()).map(|i| i < cfg.n_event).collect();
    mask.shuffle(&mut cfg.rng(usize::MAX >> 8, 0));
    mask
}

/// Generates the whole dataset in memory, in id order.
pub fn generate_records(cfg: &SynthConfig) -> Result<Vec<Waveform>> {
    cfg.validate()?;
    event_mask(cfg)
        .into_par_iter()
        .enumerate()
        .map(|(k, is_event)| {
            if is_event {
                generate_event(cfg, k)
            } else {
                generate_noise(cfg, k)
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub container: PathBuf,
    pub manifest: PathBuf,
    pub report: PathBuf,
    pub n_event: usize,
    pub n_noise: usize,
}

fn report_text(cfg: &SynthConfig, mask: &[bool]) -> Result<String> {
    let (lo, hi) = cfg.snr_range;
    let bins = ((hi - lo).ceil() as usize).max(1);
    let width = ((hi - lo) / bins as f64).max(f64::EPSILON);
    let mut hist = vec![0usize; bins];
    let mut glitches = 0;
    for (k, &is_event) in mask.iter().enumerate() {
        if is_event {
            let p = generate_event_parts(cfg, k)?;
            let b = (((p.target_snr - lo) / width) as usize).min(bins - 1);
            hist[b] += 1;
            glitches += p.glitch as usize;
        } else {
            let mut rng = cfg.rng(k, 1);
            glitches += noise_channels(cfg, &mut rng).1 as usize;
        }
    }
    let mut s = String::new();
    writeln!(s, "records: {}", mask.len()).ok();
    writeln!(s, "events: {}", cfg.n_event).ok();
    writeln!(s, "noise: {}", cfg.n_noise).ok();
    writeln!(s, "glitches: {glitches}").ok();
    writeln!(s, "noise_spectrum: {:?}", cfg.noise_spectrum).ok();
    writeln!(s, "seed: {}", cfg.seed).ok();
    writeln!(s, "snr_histogram:").ok();
    for (i, c) in hist.iter().enumerate() {
        let a = lo + i as f64 * width;
        writeln!(s, "  [{a:.2}, {:.2}): {c}", a + width).ok();
    }
    Ok(s)
}

/// Writes `<name>.rcvr`, `<name>.manifest`, and `<name>.report.txt` into `out_dir`.
pub fn build_dataset(cfg: &SynthConfig, out_dir: &Path, name: &str) -> Result<SynthOutput> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let records = generate_records(cfg)?;
    let container = out_dir.join(format!("{name}.rcvr"));
    let manifest = out_dir.join(format!("{name}.manifest"));
    let report = out_dir.join(format!("{name}.report.txt"));
    write_container(&container, &records)?;
    write_manifest(&manifest, std::slice::from_ref(&container))?;
    let text = report_text(cfg, &event_mask(cfg))?;
    fs::write(&report, text).map_err(|e| Error::io(&report, e))?;
    Ok(SynthOutput {
        container,
        manifest,
        report,
        n_event: cfg.n_event,
        n_noise: cfg.n_noise,
    })
}
