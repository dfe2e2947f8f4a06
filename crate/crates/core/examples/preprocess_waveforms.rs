//! Band-pass, crop and normalize raw records, then drop test events whose
//! onset sits too close to the window edge.

use covdetect::synthetic::{generate_records, SynthConfig};
use covdetect::waveform::{onset_margin_filter, preprocess_records, PreprocessConfig};

fn channel_std(x: &[f32]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    (x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn main() -> covdetect::Result<()> {
    let raw = generate_records(&SynthConfig {
        n_event: 20,
        n_noise: 20,
        window_seconds: 40.0,
        onset_range_seconds: (2.0, 35.0),
        seed: 3,
        ..Default::default()
    })?;
    let cfg = PreprocessConfig::default();
    let (clean, rejected) = preprocess_records(&raw, &cfg, 0);
    println!("{} raw records -> {} preprocessed, {} rejected", raw.len(), clean.len(), rejected.len());

    let w = &clean[0];
    println!("{}: {} samples per channel", w.id, w.len());
    for c in 0..3 {
        println!("  channel {c}: std {:.4}", channel_std(w.channel(c)));
    }

    let kept = onset_margin_filter(clean.clone(), 3.0);
    println!("onset margin 3 s keeps {} of {}", kept.len(), clean.len());
    Ok(())
}
