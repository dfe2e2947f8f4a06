//! Residual convolutional autoencoder: construction, training (optionally
//! denoising), checkpoints, and access to the bottleneck representation.

pub mod gradcheck;
mod loss;
mod model;
mod train;

pub use loss::{reconstruction_loss, reconstruction_loss_grad};
pub use model::{
    ArchitectureConfig, AutoencoderModel, EncoderStage, ForwardTrace, ResidualBlock, MIN_LATENT_LEN,
};
pub use train::{
    evaluate_loss, history_csv, split_validation, train, write_history_csv, EpochStats, TrainConfig,
    TrainedModel,
};

use crate::error::Result;
use crate::numerics::TensorB;
use crate::waveform::{Waveform, CHANNELS};

/// Production model type.
pub type Autoencoder = AutoencoderModel<f32>;

/// Bottleneck output for one record.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentRepresentation {
    /// `(channels, len)` row-major.
    pub values: Vec<f32>,
    pub channels: usize,
    pub len: usize,
    pub latent_rate_hz: f64,
}

/// Stacks preprocessed records into a `(B, 3, N)` batch.
pub fn batch_from_waveforms(records: &[&Waveform]) -> Result<TensorB> {
    let len = records.first().map_or(0, |w| w.len());
    let rows: Vec<&[f32]> = records.iter().map(|w| w.samples()).collect();
    TensorB::stack(&rows, CHANNELS, len)
}

/// Encodes a batch and splits it into per-record latents.
pub fn latent_representations(model: &Autoencoder, records: &[&Waveform]) -> Result<Vec<LatentRepresentation>> {
    let latent = model.encode(&batch_from_waveforms(records)?)?;
    let (_, c, n) = latent.shape();
    Ok((0..latent.batch())
        .map(|b| LatentRepresentation {
            values: latent.sample(b).to_vec(),
            channels: c,
            len: n,
            latent_rate_hz: model.latent_rate_hz(),
        })
        .collect())
}
