//! Trains a small autoencoder on unlabeled records, plain and denoising,
//! and round-trips the checkpoint.

use covdetect::autoencoder::{history_csv, train, ArchitectureConfig, Autoencoder, TrainConfig};
use covdetect::synthetic::{generate_records, SynthConfig};
use covdetect::waveform::{preprocess_records, strip_labels, PreprocessConfig};

fn main() -> covdetect::Result<()> {
    let raw = generate_records(&SynthConfig { n_event: 60, n_noise: 60, seed: 5, ..Default::default() })?;
    let (records, _) = preprocess_records(&raw, &PreprocessConfig::default(), 0);
    let data = strip_labels(&records);

    let arch = ArchitectureConfig { base_channels: 4, ..Default::default() };
    let model = Autoencoder::build(&arch, 1)?;
    println!(
        "{} parameters, latent {:?} at {} Hz",
        model.parameter_count(),
        model.latent_shape(),
        model.latent_rate_hz()
    );

    for sigma in [0.0, 0.2] {
        let cfg = TrainConfig { epochs: 3, batch_size: 16, lr: 1e-3, denoise_sigma: sigma, seed: 1, ..Default::default() };
        let trained = train(model.clone(), &data, &cfg)?;
        println!("denoise sigma {sigma}: best epoch {}", trained.best_epoch);
        print!("{}", history_csv(&trained.history));

        let path = std::env::temp_dir().join(format!("covdetect-demo-{}.rcvw", (sigma * 10.0) as u32));
        trained.model.save(&path)?;
        let back = Autoencoder::load(&path, &arch)?;
        let same = back.to_named_tensors() == trained.model.to_named_tensors();
        println!("checkpoint {} reloads identically: {same}", path.display());
    }
    Ok(())
}
