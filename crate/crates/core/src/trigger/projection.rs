use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::Autoencoder;
use crate::error::{Error, Result};
use crate::numerics::checkpoint::{read_checkpoint, write_checkpoint, NamedTensor};
use crate::numerics::{Adam, Param, TensorB};
use crate::waveform::Signal;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Weight of the pull towards each member's own latent, which rules out
    /// the all-zero solution.
    pub anchor_weight: f64,
    /// Training records are subsampled to at most this many.
    pub max_records: usize,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 1e-3,
            batch_size: 64,
            anchor_weight: 0.01,
            max_records: 1024,
            seed: 0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.max_records == 0 {
            return Err(Error::Config("projection epochs, batch_size and max_records must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.anchor_weight >= 0.0) {
            return Err(Error::Config("projection lr and anchor_weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// One square channel-mixing matrix per ensemble member, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSet {
    channels: usize,
    matrices: Vec<Vec<f32>>,
}

impl ProjectionSet {
    pub fn identity(members: usize, channels: usize) -> Self {
        let mut eye = vec![0.0f32; channels * channels];
        (0..channels).for_each(|i| eye[i * channels + i] = 1.0);
        Self {
            channels,
            matrices: vec![eye; members],
        }
    }

    pub fn from_matrices(channels: usize, matrices: Vec<Vec<f32>>) -> Result<Self> {
        for (i, m) in matrices.iter().enumerate() {
            if m.len() != channels * channels {
                return Err(Error::Shape(format!(
                    "projection {i} has {} entries, expected {channels}x{channels}",
                    m.len()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("projection {i} is not finite")));
            }
        }
        Ok(Self { channels, matrices })
    }

    pub fn members(&self) -> usize {
        self.matrices.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn matrix(&self, member: usize) -> &[f32] {
        &self.matrices[member]
    }

    /// `out[b, i, t] = sum_j P[i, j] z[b, j, t]`.
    pub fn apply(&self, member: usize, z: &TensorB) -> Result<TensorB> {
        let (b, c, n) = z.shape();
        if c != self.channels {
            return Err(Error::Shape(format!(
                "projection expects {} latent channels, got {c}",
                self.channels
            )));
        }
        let p = &self.matrices[member];
        let mut out = TensorB::zeros(b, c, n);
        for bi in 0..b {
            for i in 0..c {
                let mut acc = vec![0.0f32; n];
                for j in 0..c {
                    let w = p[i * c + j];
                    if w != 0.0 {
                        acc.iter_mut().zip(z.row(bi, j)).for_each(|(a, &v)| *a += w * v);
                    }
                }
                out.row_mut(bi, i).copy_from_slice(&acc);
            }
        }
        Ok(out)
    }

    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        self.matrices
            .iter()
            .enumerate()
            .map(|(i, m)| NamedTensor {
                name: format!("projection.{i}"),
                dims: vec![self.channels, self.channels],
                values: m.clone(),
            })
            .collect()
    }

    pub fn from_named_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let mut found: Vec<&NamedTensor> = tensors.iter().filter(|t| t.name.starts_with("projection.")).collect();
        found.sort_by_key(|t| t.name.trim_start_matches("projection.").parse::<usize>().unwrap_or(usize::MAX));
        let first = found.first().ok_or_else(|| Error::Checkpoint {
            name: "projection.0".into(),
            reason: "no projection matrices in file".into(),
        })?;
        let c = first.dims.first().copied().unwrap_or(0);
        for (i, t) in found.iter().enumerate() {
            if t.name != format!("projection.{i}") || t.dims != [c, c] {
                return Err(Error::Checkpoint {
                    name: t.name.clone(),
                    reason: format!("expected projection.{i} with dims [{c}, {c}], got {:?}", t.dims),
                });
            }
        }
        Self::from_matrices(c, found.iter().map(|t| t.values.clone()).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.to_named_tensors())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_named_tensors(&read_checkpoint(path)?)
    }
}

fn check_latents(latents: &[TensorB]) -> Result<(usize, usize, usize)> {
    if latents.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "projection training needs at least 2 members, got {}",
            latents.len()
        )));
    }
    let shape = latents[0].shape();
    if latents.iter().any(|z| z.shape() != shape) {
        return Err(Error::Shape("ensemble members produce different latent shapes".into()));
    }
    if shape.0 == 0 {
        return Err(Error::Empty("projection training set is empty".into()));
    }
    Ok(shape)
}

fn rms(d: &[f64]) -> f64 {
    (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt()
}

/// Loss of one record and, when `grads` is given, accumulation of
/// `scale * dLoss/dP_m` into it.
fn record_loss(
    mats: &[&[f64]],
    latents: &[TensorB],
    b: usize,
    anchor: f64,
    mut grads: Option<(&mut [Vec<f64>], f64)>,
) -> f64 {
    let k = mats.len();
    let (_, c, n) = latents[0].shape();
    let z: Vec<&[f32]> = latents.iter().map(|t| t.sample(b)).collect();
    let y: Vec<Vec<f64>> = (0..k)
        .map(|m| {
            let mut out = vec![0.0f64; c * n];
            for i in 0..c {
                let row = &mut out[i * n..(i + 1) * n];
                for j in 0..c {
                    let w = mats[m][i * c + j];
                    if w != 0.0 {
                        row.iter_mut().zip(&z[m][j * n..(j + 1) * n]).for_each(|(o, &v)| *o += w * v as f64);
                    }
                }
            }
            out
        })
        .collect();
    let mut loss = 0.0;
    // Gradient of the loss with respect to each projected latent.
    let mut gy = vec![vec![0.0f64; c * n]; k];
    let cn = (c * n) as f64;
    for i in 0..k {
        for j in i + 1..k {
            let d: Vec<f64> = y[i].iter().zip(&y[j]).map(|(a, b)| a - b).collect();
            let r = rms(&d);
            loss += r;
            if r > 0.0 {
                for (t, dv) in d.iter().enumerate() {
                    gy[i][t] += dv / (r * cn);
                    gy[j][t] -= dv / (r * cn);
                }
            }
        }
        if anchor > 0.0 {
            let d: Vec<f64> = y[i].iter().zip(z[i]).map(|(a, &b)| a - b as f64).collect();
            let r = rms(&d);
            loss += anchor * r;
            if r > 0.0 {
                for (t, dv) in d.iter().enumerate() {
                    gy[i][t] += anchor * dv / (r * cn);
                }
            }
        }
    }
    if let Some((grads, scale)) = grads.as_mut() {
        for m in 0..k {
            for i in 0..c {
                let g_row = &gy[m][i * n..(i + 1) * n];
                for j in 0..c {
                    let z_row = &z[m][j * n..(j + 1) * n];
                    let dot: f64 = g_row.iter().zip(z_row).map(|(g, &v)| g * v as f64).sum();
                    grads[m][i * c + j] += *scale * dot;
                }
            }
        }
    }
    loss
}

/// Mean per-record loss of a projection set over `latents`.
pub fn projection_loss(set: &ProjectionSet, latents: &[TensorB], anchor_weight: f64) -> Result<f64> {
    let (b, c, _) = check_latents(latents)?;
    if set.members() != latents.len() || set.channels() != c {
        return Err(Error::Shape("projection set does not match the ensemble".into()));
    }
    let mats: Vec<Vec<f64>> = set.matrices.iter().map(|m| m.iter().map(|&v| v as f64).collect()).collect();
    let refs: Vec<&[f64]> = mats.iter().map(|m| &m[..]).collect();
    Ok((0..b).map(|bi| record_loss(&refs, latents, bi, anchor_weight, None)).sum::<f64>() / b as f64)
}

/// Result of fitting projections: the matrices and the mean loss per epoch.
#[derive(Clone, Debug)]
pub struct ProjectionFit {
    pub projections: ProjectionSet,
    pub history: Vec<f64>,
}

/// Fits one matrix per member, starting from identity, by Adam on the
/// summed pairwise RMS between projected latents plus the anchor term.
/// `latents[m]` holds member `m`'s encodings of the same records.
pub fn train_projections_on_latents(latents: &[TensorB], cfg: &ProjectionConfig) -> Result<ProjectionFit> {
    cfg.validate()?;
    let (b, c, _) = check_latents(latents)?;
    let k = latents.len();
    let eye = ProjectionSet::identity(1, c).matrices.remove(0);
    let mut params: Vec<Param<f64>> = (0..k)
        .map(|_| Param::new(&[c, c], eye.iter().map(|&v| v as f64).collect()))
        .collect::<Result<_>>()?;
    let adam = Adam::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..b).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for part in order.chunks(cfg.batch_size) {
            let mats: Vec<Vec<f64>> = params.iter().map(|p| p.value.clone()).collect();
            let refs: Vec<&[f64]> = mats.iter().map(|m| &m[..]).collect();
            let mut grads = vec![vec![0.0f64; c * c]; k];
            let scale = 1.0 / part.len() as f64;
            for &bi in part {
                total += record_loss(&refs, latents, bi, cfg.anchor_weight, Some((&mut grads, scale)));
            }
            for (p, g) in params.iter_mut().zip(grads) {
                p.grad = g;
            }
            let mut refs: Vec<&mut Param<f64>> = params.iter_mut().collect();
            adam.step(&mut refs);
        }
        history.push(total / b as f64);
        log::debug!("projection epoch loss {:.6}", history.last().unwrap());
    }
    let matrices = params.iter().map(|p| p.value.iter().map(|&v| v as f32).collect()).collect();
    Ok(ProjectionFit {
        projections: ProjectionSet::from_matrices(c, matrices)?,
        history,
    })
}

/// Encodes (a seeded subsample of) `data` with every model and fits the
/// projections on the resulting latents. Encoder weights are not touched.
pub fn train_projections(models: &[Autoencoder], data: &[Signal], cfg: &ProjectionConfig) -> Result<ProjectionFit> {
    if models.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "projection training needs at least 2 models, got {}",
            models.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9));
    idx.truncate(cfg.max_records);
    idx.sort_unstable();
    let rows: Vec<&Signal> = idx.iter().map(|&i| &data[i]).collect();
    let latents = models
        .iter()
        .map(|m| super::encode_signals(m, &rows))
        .collect::<Result<Vec<_>>>()?;
    train_projections_on_latents(&latents, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(b: usize, c: usize, n: usize, seed: u64) -> TensorB {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TensorB::from_vec((b, c, n), (0..b * c * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn permuted(z: &TensorB, perm: &[usize]) -> TensorB {
        let (b, c, n) = z.shape();
        let mut out = TensorB::zeros(b, c, n);
        for bi in 0..b {
            for (i, &p) in perm.iter().enumerate() {
                out.row_mut(bi, i).copy_from_slice(z.row(bi, p));
            }
        }
        out
    }

    #[test]
    fn identity_apply_and_roundtrip() {
        let z = random(2, 3, 5, 0);
        let set = ProjectionSet::identity(2, 3);
        assert_eq!(set.apply(1, &z).unwrap(), z);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.rcvw");
        let m = ProjectionSet::from_matrices(2, vec![vec![1.0, 2.0, 3.0, 4.0], vec![0.5; 4]]).unwrap();
        m.save(&path).unwrap();
        assert_eq!(ProjectionSet::load(&path).unwrap(), m);
        assert!(ProjectionSet::from_matrices(2, vec![vec![1.0; 3]]).is_err());
        assert!(ProjectionSet::from_matrices(1, vec![vec![f32::NAN]]).is_err());
    }

    #[test]
    fn apply_mixes_channels() {
        let z = TensorB::from_vec((1, 2, 2), vec![1.0, 2.0, 10.0, 20.0]).unwrap();
        let set = ProjectionSet::from_matrices(2, vec![vec![0.0, 1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(set.apply(0, &z).unwrap().data(), &[10.0, 20.0, 11.0, 22.0]);
    }

    #[test]
    fn identical_members_stay_at_zero_loss() {
        let z = random(16, 4, 10, 1);
        let fit = train_projections_on_latents(&[z.clone(), z.clone(), z], &ProjectionConfig { epochs: 3, ..Default::default() }).unwrap();
        assert!(fit.history.iter().all(|&l| l <= 1e-3));
        assert_eq!(fit.projections, ProjectionSet::identity(3, 4));
    }

    #[test]
    fn needs_two_members() {
        let z = random(4, 2, 5, 2);
        assert!(train_projections_on_latents(&[z.clone()], &ProjectionConfig::default()).is_err());
        assert!(train_projections_on_latents(&[z, random(4, 3, 5, 2)], &ProjectionConfig::default()).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let latents = [random(3, 3, 6, 3), random(3, 3, 6, 4), random(3, 3, 6, 5)];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mats: Vec<Vec<f64>> = (0..3).map(|_| (0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let loss_of = |flat: &[f64]| {
            let refs: Vec<&[f64]> = flat.chunks(9).collect();
            (0..3).map(|b| record_loss(&refs, &latents, b, 0.01, None)).sum::<f64>() / 3.0
        };
        let flat: Vec<f64> = mats.concat();
        let fd = crate::numerics::finite_difference_gradient(loss_of, &flat, 1e-6);
        let mut grads = vec![vec![0.0; 9]; 3];
        let refs: Vec<&[f64]> = mats.iter().map(|m| &m[..]).collect();
        for b in 0..3 {
            record_loss(&refs, &latents, b, 0.01, Some((&mut grads, 1.0 / 3.0)));
        }
        assert!(crate::numerics::relative_error(&grads.concat(), &fd) < 1e-6);
    }

    #[test]
    fn loss_decreases_on_unrelated_members() {
        let latents = [random(64, 4, 12, 7), random(64, 4, 12, 8)];
        let cfg = ProjectionConfig { epochs: 8, lr: 1e-2, batch_size: 16, ..Default::default() };
        let fit = train_projections_on_latents(&latents, &cfg).unwrap();
        for w in fit.history.windows(2) {
            assert!(w[1] <= w[0] * 1.05, "{:?}", fit.history);
        }
        assert!(fit.history.last().unwrap() < &fit.history[0]);
    }

    #[test]
    fn learns_a_channel_permutation() {
        let z = random(64, 4, 16, 9);
        let perm = [2, 0, 3, 1];
        let latents = [z.clone(), permuted(&z, &perm)];
        let cfg = ProjectionConfig { epochs: 150, lr: 1e-2, batch_size: 16, anchor_weight: 0.01, ..Default::default() };
        let before = projection_loss(&ProjectionSet::identity(2, 4), &latents, 0.0).unwrap();
        let fit = train_projections_on_latents(&latents, &cfg).unwrap();
        let after = projection_loss(&fit.projections, &latents, 0.0).unwrap();
        assert!(after < 0.1 * before, "before {before} after {after}");
    }
}
