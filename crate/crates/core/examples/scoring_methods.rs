//! Scores one test set with the single, augmented and ensemble methods and
//! reports ROC-AUC for each.

use covdetect::autoencoder::{train, ArchitectureConfig, Autoencoder, TrainConfig};
use covdetect::evaluation::{roc_auc, ScoredRecord};
use covdetect::synthetic::{generate_records, SynthConfig};
use covdetect::trigger::{
    score_augmented, score_ensemble, score_single, train_projections, ProjectionConfig, TriggerConfig, WarpConfig,
};
use covdetect::waveform::{preprocess_records, strip_labels, PreprocessConfig, Waveform};

fn auc(records: &[Waveform], scores: &[f64]) -> covdetect::Result<f64> {
    let scored: Vec<ScoredRecord> = records
        .iter()
        .zip(scores)
        .map(|(w, &score)| ScoredRecord { id: w.id.clone(), label: w.label.expect("labeled"), score })
        .collect();
    roc_auc(&scored)
}

fn main() -> covdetect::Result<()> {
    let pre = PreprocessConfig::default();
    let (train_set, _) = preprocess_records(
        &generate_records(&SynthConfig { n_event: 80, n_noise: 80, seed: 1, ..Default::default() })?,
        &pre,
        0,
    );
    let (test_set, _) = preprocess_records(
        &generate_records(&SynthConfig {
            n_event: 40,
            n_noise: 40,
            seed: 2,
            snr_range: (1.0, 3.0),
            id_prefix: "test".into(),
            ..Default::default()
        })?,
        &pre,
        0,
    );
    let data = strip_labels(&train_set);

    let arch = ArchitectureConfig { base_channels: 4, ..Default::default() };
    let cfg = TrainConfig { epochs: 2, batch_size: 16, lr: 1e-3, ..Default::default() };
    let models = (0..3)
        .map(|m| train(Autoencoder::build(&arch, m)?, &data, &TrainConfig { seed: m, ..cfg.clone() }).map(|t| t.model))
        .collect::<covdetect::Result<Vec<_>>>()?;

    let trig = TriggerConfig::default();
    let single = score_single(&models[0], &test_set, &trig)?;
    println!("single     AUC {:.3}", auc(&test_set, &single)?);

    let augmented = score_augmented(&models[0], &test_set, 5, &WarpConfig::default(), &trig, 0)?;
    println!("augmented  AUC {:.3}", auc(&test_set, &augmented)?);

    let fit = train_projections(&models, &data, &ProjectionConfig { epochs: 5, ..Default::default() })?;
    println!("projection loss by epoch {:?}", fit.history);
    let ensemble = score_ensemble(&models, &fit.projections, &test_set, &trig)?;
    println!("ensemble   AUC {:.3}", auc(&test_set, &ensemble)?);
    Ok(())
}
