use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::{reconstruction_loss, reconstruction_loss_grad};
use super::model::AutoencoderModel;
use crate::error::{Error, Result};
use crate::numerics::{Adam, TensorB};
use crate::waveform::Signal;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Std of the Gaussian corruption added to inputs; 0 trains a plain
    /// autoencoder.
    pub denoise_sigma: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            epochs: 20,
            lr: 1e-4,
            denoise_sigma: 0.0,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(self.denoise_sigma >= 0.0) || !(self.lr >= 0.0) {
            return Err(Error::Config("denoise_sigma and lr must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Best-validation checkpoint plus the full loss history.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: AutoencoderModel<f32>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn best_val_loss(&self) -> f64 {
        self.history[self.best_epoch - 1].val_loss
    }
}

fn stack(data: &[Signal], idx: &[usize], channels: usize, len: usize) -> Result<TensorB> {
    let rows: Vec<&[f32]> = idx.iter().map(|&i| data[i].samples()).collect();
    TensorB::stack(&rows, channels, len)
}

/// Mean reconstruction loss of clean inputs, evaluated in chunks.
pub fn evaluate_loss(model: &AutoencoderModel<f32>, data: &[Signal], idx: &[usize], chunk: usize) -> Result<f64> {
    let arch = model.arch();
    let mut total = 0.0;
    for part in idx.chunks(chunk.max(1)) {
        let x = stack(data, part, arch.input_channels, arch.input_len)?;
        total += reconstruction_loss(&x, &model.reconstruct(&x)?)? * part.len() as f64;
    }
    Ok(total / idx.len().max(1) as f64)
}

/// Splits indices into (train, validation) with a seeded shuffle. Both sides
/// are non-empty; a single record serves as its own validation set.
pub fn split_validation(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_7a11));
    if n < 2 {
        return (idx.clone(), idx);
    }
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Trains with Adam on shuffled mini-batches and returns the epoch with the
/// lowest validation loss. With `denoise_sigma > 0` the loss compares the
/// output for a corrupted input against the clean input.
pub fn train(mut model: AutoencoderModel<f32>, data: &[Signal], cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set has no records".into()));
    }
    let arch = model.arch().clone();
    let (mut train_idx, val_idx) = split_validation(data.len(), cfg.validation_fraction, cfg.seed);
    let batch = cfg.batch_size.min(train_idx.len());
    let adam = Adam::new(cfg.lr);
    let noise = (cfg.denoise_sigma > 0.0).then(|| Normal::new(0.0, cfg.denoise_sigma).expect("sigma > 0"));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, AutoencoderModel<f32>)> = None;
    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for part in train_idx.chunks(batch) {
            let clean = stack(data, part, arch.input_channels, arch.input_len)?;
            let input = match &noise {
                Some(dist) => {
                    let mut noisy = clean.clone();
                    for v in noisy.data_mut() {
                        *v += dist.sample(&mut rng) as f32;
                    }
                    noisy
                }
                None => clean.clone(),
            };
            let (out, trace) = model.forward_train(&input)?;
            let (loss, grad) = reconstruction_loss_grad(&clean, &out)?;
            model.backward(&trace, &grad)?;
            adam.step(&mut model.params_mut());
            epoch_loss += loss * part.len() as f64;
        }
        let train_loss = epoch_loss / train_idx.len() as f64;
        let val_loss = evaluate_loss(&model, data, &val_idx, batch)?;
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|(v, _, _)| val_loss < *v) {
            best = Some((val_loss, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainedModel {
        model,
        history,
        best_epoch,
    })
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for e in history {
        writeln!(s, "{},{},{}", e.epoch, e.train_loss, e.val_loss).ok();
    }
    s
}

pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}
