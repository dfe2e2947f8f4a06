//! Stratified k-fold evaluation of every table row, plus a cross-dataset
//! run, with a reduced model so it finishes in about a minute.

use covdetect::autoencoder::{ArchitectureConfig, TrainConfig};
use covdetect::evaluation::{evaluate, format_table, Dataset, EvalConfig, Pipeline, Variant};
use covdetect::synthetic::{generate_records, NoiseSpectrum, SynthConfig};
use covdetect::trigger::{MethodConfig, ProjectionConfig};

fn main() -> covdetect::Result<()> {
    let a = Dataset {
        name: "brownish".into(),
        records: generate_records(&SynthConfig { n_event: 60, n_noise: 60, seed: 1, ..Default::default() })?,
    };
    let b = Dataset {
        name: "white".into(),
        records: generate_records(&SynthConfig {
            n_event: 60,
            n_noise: 60,
            seed: 2,
            noise_spectrum: NoiseSpectrum::White,
            id_prefix: "w".into(),
            ..Default::default()
        })?,
    };
    let pipeline = Pipeline {
        arch: ArchitectureConfig { base_channels: 4, ..Default::default() },
        train: TrainConfig { epochs: 2, batch_size: 16, lr: 1e-3, ..Default::default() },
        projection: ProjectionConfig { epochs: 3, ..Default::default() },
        method: MethodConfig { k: 3, ..Default::default() },
        eval: EvalConfig { folds: 3, seed: 7, variants: Variant::table_rows(0.2), ..Default::default() },
        ..Default::default()
    };

    let within = evaluate(&pipeline, &a, None, None)?;
    let across = evaluate(&pipeline, &a, Some(&b), None)?;
    println!("{} autoencoders trained for the within-dataset run", within.training.len());
    let mut reports = within.reports;
    reports.extend(across.reports);
    print!("{}", format_table(&reports));
    Ok(())
}
