//! Lag-domain cross-covariance of latent sequences and the Gaussian weighted
//! score, first on toy latents, then on records through an encoder.

use covdetect::autoencoder::{ArchitectureConfig, Autoencoder};
use covdetect::synthetic::{generate_event, generate_noise, SynthConfig};
use covdetect::trigger::{cross_covariance, gaussian_score, profiles_csv, Detector, MethodConfig, TriggerConfig};
use covdetect::waveform::{preprocess_records, PreprocessConfig};

fn main() -> covdetect::Result<()> {
    // Two channels, a shifted copy: the peak sits at the shift.
    let len = 64;
    let a: Vec<f64> = (0..2 * len).map(|i| ((i % len) as f64 * 0.4).sin()).collect();
    let b: Vec<f64> = (0..2 * len).map(|i| ((i % len) as f64 * 0.4 - 1.2).sin()).collect();
    let p = cross_covariance(&a, &b, 2, len, 6, 1.0)?;
    for (i, v) in p.values.iter().enumerate() {
        println!("lag {:>4.0} s: {v:>7.4}", p.lag_seconds(i));
    }

    let synth = SynthConfig { seed: 2, snr_range: (8.0, 8.0), ..Default::default() };
    let raw = vec![generate_event(&synth, 0)?, generate_noise(&synth, 1)?];
    let (records, _) = preprocess_records(&raw, &PreprocessConfig::default(), 0);
    let model = Autoencoder::build(&ArchitectureConfig { base_channels: 4, ..Default::default() }, 0)?;
    let trig = TriggerConfig::default();
    let det = Detector::new(MethodConfig::default(), trig.clone(), vec![model])?;
    let profiles = det.profiles(&records)?;
    for (w, p) in records.iter().zip(&profiles) {
        println!("{} ({:?}): cov(0) {:.3}, score {:.3}", w.id, w.label, p.at(0), gaussian_score(p, &trig));
    }
    let ids: Vec<&str> = records.iter().map(|w| w.id.as_str()).collect();
    let csv = profiles_csv(&ids, &profiles);
    println!("profile CSV: {} rows", csv.lines().count() - 1);
    Ok(())
}
