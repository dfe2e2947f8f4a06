use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::filter::Butterworth;
use super::{Label, Waveform, CHANNELS};
use crate::error::{Error, Result};

/// How the analysis window is placed inside a longer record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropPolicy {
    /// Seeded uniform placement; events keep their onset inside the window.
    Random,
    /// Deterministic: events centred on the onset as far as possible, noise
    /// centred in the record.
    MaxMargin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub window_seconds: f64,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub jitter_sigma: f64,
    pub normalize: bool,
    pub crop: CropPolicy,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            window_seconds: 30.0,
            band_lo_hz: 1.0,
            band_hi_hz: 20.0,
            jitter_sigma: 1e-6,
            normalize: true,
            crop: CropPolicy::MaxMargin,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.window_seconds > 0.0) {
            return Err(Error::Config(format!("window_seconds {} must be > 0", self.window_seconds)));
        }
        if !(0.0 < self.band_lo_hz && self.band_lo_hz < self.band_hi_hz && self.band_hi_hz < sample_rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "band {}-{} Hz invalid at {sample_rate_hz} Hz sampling",
                self.band_lo_hz, self.band_hi_hz
            )));
        }
        if !(self.jitter_sigma >= 0.0) {
            return Err(Error::Config(format!("jitter_sigma {} must be >= 0", self.jitter_sigma)));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate_hz: f64) -> usize {
        (self.window_seconds * sample_rate_hz).round() as usize
    }
}

fn crop_start<R: Rng>(w: &Waveform, window: usize, policy: CropPolicy, rng: &mut R) -> usize {
    let slack = w.len() - window;
    if slack == 0 {
        return 0;
    }
    let onset = w.onset_index.filter(|_| w.label == Some(Label::Event));
    match (policy, onset) {
        (CropPolicy::Random, Some(o)) => {
            let lo = (o + 1).saturating_sub(window);
            let hi = o.min(slack);
            rng.random_range(lo..=hi)
        }
        (CropPolicy::Random, None) => rng.random_range(0..=slack),
        (CropPolicy::MaxMargin, Some(o)) => o.saturating_sub(window / 2).min(slack),
        (CropPolicy::MaxMargin, None) => slack / 2,
    }
}

/// Crop, band-pass, per-channel demean and unit-std scaling, then jitter.
pub fn preprocess(w: &Waveform, cfg: &PreprocessConfig, rng_seed: u64) -> Result<Waveform> {
    cfg.validate(w.sample_rate_hz)?;
    let window = cfg.window_samples(w.sample_rate_hz);
    if w.len() < window {
        return Err(Error::Record {
            id: w.id.clone(),
            reason: format!("{} samples, window needs {window}", w.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let start = crop_start(w, window, cfg.crop, &mut rng);
    let filt = Butterworth::bandpass(4, cfg.band_lo_hz, cfg.band_hi_hz, w.sample_rate_hz)?;

    let mut samples = Vec::with_capacity(CHANNELS * window);
    for c in 0..CHANNELS {
        let seg: Vec<f64> = w.channel(c)[start..start + window].iter().map(|&v| v as f64).collect();
        let mut y = filt.filtfilt(&seg);
        let mean = y.iter().sum::<f64>() / window as f64;
        y.iter_mut().for_each(|v| *v -= mean);
        if cfg.normalize {
            let std = (y.iter().map(|v| v * v).sum::<f64>() / window as f64).sqrt();
            if std < 1e-12 {
                y.iter_mut().for_each(|v| *v = 0.0);
            } else {
                y.iter_mut().for_each(|v| *v /= std);
            }
        }
        samples.extend(y.into_iter().map(|v| v as f32));
    }
    if cfg.jitter_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.jitter_sigma).expect("sigma >= 0");
        for v in samples.iter_mut() {
            *v += normal.sample(&mut rng) as f32;
        }
    }
    let onset = w
        .onset_index
        .and_then(|o| o.checked_sub(start))
        .filter(|&o| o < window);
    Waveform::new(w.id.clone(), samples, w.sample_rate_hz, w.label, onset)
}

/// Drops events whose onset lies within `margin_seconds` of either window
/// edge. Noise and events without an onset pass.
pub fn onset_margin_filter(records: Vec<Waveform>, margin_seconds: f64) -> Vec<Waveform> {
    records
        .into_iter()
        .filter(|w| {
            if w.label != Some(Label::Event) {
                return true;
            }
            let Some(onset) = w.onset_index else { return true };
            let margin = margin_seconds * w.sample_rate_hz;
            let o = onset as f64;
            o >= margin && (w.len() as f64 - o) >= margin
        })
        .collect()
}
