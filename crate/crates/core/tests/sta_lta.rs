//! Classical STA/LTA trigger as a reference detector on the synthetic data:
//! events must stay detectable by a non-learned method.

use covdetect::evaluation::{roc_auc, ScoredRecord};
use covdetect::synthetic::{generate_records, NoiseSpectrum, SynthConfig};
use covdetect::waveform::{bandpass_channel, Waveform, CHANNELS};

const STA_SECONDS: f64 = 0.5;
const LTA_SECONDS: f64 = 10.0;

/// Largest ratio of trailing short-term to long-term mean energy, summed
/// over channels after a 1-20 Hz band-pass.
fn sta_lta_peak(w: &Waveform) -> f64 {
    let fs = w.sample_rate_hz;
    let n = w.len();
    let mut energy = vec![0.0f64; n];
    for c in 0..CHANNELS {
        let y = bandpass_channel(w.channel(c), fs, 1.0, 20.0).unwrap();
        for (e, v) in energy.iter_mut().zip(&y) {
            *e += (*v as f64).powi(2);
        }
    }
    let ns = (STA_SECONDS * fs) as usize;
    let nl = (LTA_SECONDS * fs) as usize;
    let mut cum = vec![0.0f64; n + 1];
    for i in 0..n {
        cum[i + 1] = cum[i] + energy[i];
    }
    let mut best = 0.0f64;
    for t in nl..=n {
        let sta = (cum[t] - cum[t - ns]) / ns as f64;
        let lta = (cum[t] - cum[t - nl]) / nl as f64;
        if lta > 0.0 {
            best = best.max(sta / lta);
        }
    }
    best
}

fn auc_for(cfg: &SynthConfig) -> f64 {
    let records = generate_records(cfg).unwrap();
    let scored: Vec<ScoredRecord> = records
        .iter()
        .map(|w| ScoredRecord { id: w.id.clone(), label: w.label.unwrap(), score: sta_lta_peak(w) })
        .collect();
    roc_auc(&scored).unwrap()
}

#[test]
fn events_above_snr_3_are_detectable() {
    for spectrum in [NoiseSpectrum::Brownish, NoiseSpectrum::White] {
        let cfg = SynthConfig {
            n_event: 150,
            n_noise: 150,
            snr_range: (3.0, 10.0),
            onset_range_seconds: (12.0, 20.0),
            noise_spectrum: spectrum,
            seed: 8,
            ..Default::default()
        };
        let auc = auc_for(&cfg);
        assert!(auc > 0.85, "{spectrum:?}: STA/LTA AUC {auc}");
    }
}

#[test]
fn weaker_events_are_harder() {
    let base = SynthConfig { n_event: 150, n_noise: 150, onset_range_seconds: (12.0, 20.0), seed: 4, ..Default::default() };
    let strong = auc_for(&SynthConfig { snr_range: (6.0, 10.0), ..base.clone() });
    let weak = auc_for(&SynthConfig { snr_range: (0.5, 1.0), ..base });
    assert!(weak < strong, "weak {weak} vs strong {strong}");
}
