use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::checkpoint::NamedTensor;
use crate::numerics::{channel_moments, TensorB, BATCH_NORM_EPS};

/// Where latent normalization takes its per-channel statistics from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormSource {
    /// The scoring set itself.
    #[default]
    Batch,
    /// Statistics fitted once on training latents.
    Running,
}

/// Per-channel mean and variance of a latent population.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl LatentStats {
    pub fn of(latents: &TensorB) -> Result<Self> {
        let (mean, var) = channel_moments(latents)?;
        Ok(Self { mean, var })
    }

    /// Pools statistics of several chunks encoded separately.
    pub fn of_chunks(chunks: &[TensorB]) -> Result<Self> {
        let c = chunks.first().map(|t| t.channels()).ok_or_else(|| Error::Empty("no latent chunks".into()))?;
        let mut sum = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        let mut count = 0usize;
        for t in chunks {
            if t.channels() != c {
                return Err(Error::Shape("latent chunks disagree on channel count".into()));
            }
            count += t.batch() * t.len_time();
            for b in 0..t.batch() {
                for ch in 0..c {
                    for &v in t.row(b, ch) {
                        sum[ch] += v as f64;
                        sq[ch] += (v as f64) * (v as f64);
                    }
                }
            }
        }
        if count == 0 {
            return Err(Error::Empty("latent chunks hold no values".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let var = sq.iter().zip(&mean).map(|(s, m)| (s / count as f64 - m * m).max(0.0)).collect();
        Ok(Self { mean, var })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn to_named_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        let c = self.channels();
        vec![
            NamedTensor {
                name: format!("{prefix}.mean"),
                dims: vec![c],
                values: self.mean.iter().map(|&v| v as f32).collect(),
            },
            NamedTensor {
                name: format!("{prefix}.var"),
                dims: vec![c],
                values: self.var.iter().map(|&v| v as f32).collect(),
            },
        ]
    }

    pub fn from_named_tensors(prefix: &str, tensors: &[NamedTensor]) -> Result<Self> {
        let find = |suffix: &str| {
            let name = format!("{prefix}.{suffix}");
            tensors
                .iter()
                .find(|t| t.name == name)
                .map(|t| t.values.iter().map(|&v| v as f64).collect::<Vec<f64>>())
                .ok_or(Error::Checkpoint {
                    name,
                    reason: "missing from file".into(),
                })
        };
        let (mean, var) = (find("mean")?, find("var")?);
        if mean.len() != var.len() {
            return Err(Error::Checkpoint {
                name: prefix.into(),
                reason: "mean and var lengths differ".into(),
            });
        }
        Ok(Self { mean, var })
    }
}

/// `(z - mean) / sqrt(var + eps)` per channel, with unit gamma and zero beta.
/// `eps` is relative: the batch-norm epsilon times the mean channel
/// variance, so a common rescaling of all latents cancels exactly while
/// constant channels still map to zero.
pub fn normalize_with(latents: &TensorB, stats: &LatentStats) -> Result<TensorB> {
    let (b, c, _) = latents.shape();
    if stats.channels() != c {
        return Err(Error::Shape(format!(
            "latent stats have {} channels, latents have {c}",
            stats.channels()
        )));
    }
    let mean_var = stats.var.iter().sum::<f64>() / c.max(1) as f64;
    let eps = BATCH_NORM_EPS * mean_var;
    let mut out = latents.clone();
    for bi in 0..b {
        for ch in 0..c {
            let m = stats.mean[ch];
            let inv = if stats.var[ch] + eps > 0.0 { 1.0 / (stats.var[ch] + eps).sqrt() } else { 0.0 };
            for v in out.row_mut(bi, ch) {
                *v = ((*v as f64 - m) * inv) as f32;
            }
        }
    }
    Ok(out)
}

/// Batch-mode normalization uses the statistics of `latents` itself.
pub fn latent_normalize(latents: &TensorB, running: Option<&LatentStats>) -> Result<TensorB> {
    if latents.batch() == 0 {
        return Err(Error::Empty("latent_normalize: empty batch".into()));
    }
    match running {
        Some(stats) => normalize_with(latents, stats),
        None => normalize_with(latents, &LatentStats::of(latents)?),
    }
}
