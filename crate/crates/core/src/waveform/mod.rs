//! Waveform records, their on-disk formats, and the preprocessing chain
//! applied before training and scoring.

mod container;
mod filter;
mod manifest;
mod preprocess;

pub use container::{
    decode_container, encode_container, read_container, read_csv_records, write_container,
    CONTAINER_MAGIC, CONTAINER_VERSION,
};
pub use filter::{bandpass, bandpass_channel, Butterworth};
pub use manifest::{load_dataset, read_manifest_paths, write_manifest, DatasetManifest, LoadOptions, LoadedDataset, ManifestEntry};
pub use preprocess::{onset_margin_filter, preprocess, CropPolicy, PreprocessConfig};

use crate::error::{Error, Result};

/// Number of components per station record.
pub const CHANNELS: usize = 3;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Noise,
    Event,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Noise => "noise",
            Label::Event => "event",
        }
    }

    pub fn parse(s: &str) -> Option<Option<Label>> {
        match s.trim().to_ascii_lowercase().as_str() {
            "event" | "1" | "eq" | "earthquake" => Some(Some(Label::Event)),
            "noise" | "0" => Some(Some(Label::Noise)),
            "" | "unlabeled" | "255" | "none" => Some(None),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A 3-component window with optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub id: String,
    /// Channel-major, `CHANNELS * len` values.
    samples: Vec<f32>,
    len: usize,
    pub sample_rate_hz: f64,
    pub label: Option<Label>,
    pub onset_index: Option<usize>,
}

impl Waveform {
    /// Builds and validates a record.
    pub fn new(
        id: impl Into<String>,
        samples: Vec<f32>,
        sample_rate_hz: f64,
        label: Option<Label>,
        onset_index: Option<usize>,
    ) -> Result<Self> {
        let id = id.into();
        let reject = |reason: String| Error::Record {
            id: id.clone(),
            reason,
        };
        if samples.len() % CHANNELS != 0 || samples.is_empty() {
            return Err(reject(format!(
                "{} samples do not split into {CHANNELS} equal channels",
                samples.len()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(reject(format!("invalid sample rate {sample_rate_hz}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(reject(format!(
                "non-finite sample at channel {}, index {}",
                i / (samples.len() / CHANNELS),
                i % (samples.len() / CHANNELS)
            )));
        }
        let len = samples.len() / CHANNELS;
        if let Some(onset) = onset_index {
            if onset >= len {
                return Err(reject(format!("onset {onset} outside {len} samples")));
            }
            if label != Some(Label::Event) {
                return Err(reject("onset given for a record not labeled event".into()));
            }
        }
        Ok(Self {
            id,
            samples,
            len,
            sample_rate_hz,
            label,
            onset_index,
        })
    }

    /// Number of time samples per channel.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.samples[c * self.len..(c + 1) * self.len]
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len as f64 / self.sample_rate_hz
    }

    /// Same metadata, new samples (length may change; onset is dropped if it
    /// no longer fits).
    pub fn with_samples(&self, samples: Vec<f32>) -> Result<Self> {
        let len = samples.len() / CHANNELS;
        let onset = self.onset_index.filter(|&o| o < len);
        Self::new(self.id.clone(), samples, self.sample_rate_hz, self.label, onset)
    }

    /// Drops ground truth; training code paths only accept [`Signal`]s.
    pub fn to_signal(&self) -> Signal {
        Signal {
            samples: self.samples.clone(),
            len: self.len,
        }
    }
}

/// Label-free samples, the only input type the training code accepts.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    samples: Vec<f32>,
    len: usize,
}

impl Signal {
    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Per-record seed derived from a run seed and the record id, so draws do
/// not depend on where a record sits in a set.
pub fn id_seed(seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Preprocesses every record in parallel, keeping input order. Records that
/// fail are returned separately instead of aborting the batch.
pub fn preprocess_records(records: &[Waveform], cfg: &PreprocessConfig, seed: u64) -> (Vec<Waveform>, Vec<Error>) {
    use rayon::prelude::*;
    let results: Vec<Result<Waveform>> = records
        .par_iter()
        .map(|w| preprocess(w, cfg, id_seed(seed, &w.id)))
        .collect();
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(w) => ok.push(w),
            Err(e) => failed.push(e),
        }
    }
    (ok, failed)
}

/// Strips labels from a record set.
pub fn strip_labels(records: &[Waveform]) -> Vec<Signal> {
    records.iter().map(Waveform::to_signal).collect()
}
