//! Builds a small labeled synthetic dataset on disk and reloads it through
//! its manifest.
//!
//! cargo run --release --example synth_dataset [out_dir]

use std::path::PathBuf;

use covdetect::synthetic::{build_dataset, NoiseSpectrum, SynthConfig};
use covdetect::waveform::{load_dataset, Label, LoadOptions};

fn main() -> covdetect::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("covdetect-synth"));
    let cfg = SynthConfig {
        n_event: 40,
        n_noise: 40,
        snr_range: (2.0, 6.0),
        noise_spectrum: NoiseSpectrum::Brownish,
        seed: 11,
        ..Default::default()
    };
    let built = build_dataset(&cfg, &out, "demo")?;
    println!("{}", std::fs::read_to_string(&built.report).unwrap_or_default().trim_end());

    let loaded = load_dataset(&built.manifest, LoadOptions::default())?;
    println!(
        "reloaded {} records ({} event, {} noise), {} errors",
        loaded.waveforms.len(),
        loaded.manifest.count(Some(Label::Event)),
        loaded.manifest.count(Some(Label::Noise)),
        loaded.errors.len()
    );
    let w = &loaded.waveforms[0];
    println!(
        "first record: id {} label {:?} onset {:?} duration {:.1} s",
        w.id,
        w.label,
        w.onset_index,
        w.duration_seconds()
    );
    Ok(())
}
