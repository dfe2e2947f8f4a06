use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::checkpoint::{read_checkpoint, write_checkpoint, NamedTensor};
use crate::numerics::{conv_output_len, relu, relu_backward, Conv1d, ConvTranspose1d, Param, Real, Tensor};

/// Smallest latent length that still leaves room for lag analysis.
pub const MIN_LATENT_LEN: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub n_down: usize,
    pub base_channels: usize,
    /// Channel multiplier per downsampling stage.
    pub channel_growth: usize,
    pub kernel_down: usize,
    pub residual_per_stage: usize,
    pub kernel_res: usize,
    pub input_channels: usize,
    pub input_len: usize,
    pub sample_rate_hz: f64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            n_down: 4,
            base_channels: 8,
            channel_growth: 2,
            kernel_down: 7,
            residual_per_stage: 1,
            kernel_res: 3,
            input_channels: 3,
            input_len: 3000,
            sample_rate_hz: 100.0,
        }
    }
}

impl ArchitectureConfig {
    pub fn stage_channels(&self, stage: usize) -> usize {
        self.base_channels * self.channel_growth.pow(stage as u32)
    }

    /// Input length of every downsampling stage, outermost first.
    pub fn stage_lengths(&self) -> Vec<usize> {
        let mut n = self.input_len;
        (0..self.n_down)
            .map(|_| {
                let here = n;
                n = conv_output_len(n, 2);
                here
            })
            .collect()
    }

    pub fn latent_len(&self) -> usize {
        (0..self.n_down).fold(self.input_len, |n, _| conv_output_len(n, 2))
    }

    pub fn latent_channels(&self) -> usize {
        if self.n_down == 0 {
            self.input_channels
        } else {
            self.stage_channels(self.n_down - 1)
        }
    }

    pub fn latent_rate_hz(&self) -> f64 {
        self.sample_rate_hz / 2f64.powi(self.n_down as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_down == 0 || self.base_channels == 0 || self.channel_growth == 0 {
            return Err(Error::Config("n_down, base_channels and channel_growth must be positive".into()));
        }
        if self.kernel_down == 0 || self.kernel_res == 0 || self.input_channels == 0 {
            return Err(Error::Config("kernel sizes and input channels must be positive".into()));
        }
        if self.latent_len() < MIN_LATENT_LEN {
            return Err(Error::Config(format!(
                "latent length {} below {MIN_LATENT_LEN}: too many downsampling stages for {} samples",
                self.latent_len(),
                self.input_len
            )));
        }
        Ok(())
    }
}

/// conv -> ReLU -> conv, plus identity skip, then ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock<T> {
    pub conv1: Conv1d<T>,
    pub conv2: Conv1d<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStage<T> {
    pub down: Conv1d<T>,
    pub residual: Vec<ResidualBlock<T>>,
}

/// Residual convolutional autoencoder. The encoder is a stack of strided
/// downsampling stages; the decoder mirrors them with transposed
/// convolutions that restore each recorded stage length exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderModel<T> {
    arch: ArchitectureConfig,
    pub encoder: Vec<EncoderStage<T>>,
    pub decoder: Vec<ConvTranspose1d<T>>,
    stage_lengths: Vec<usize>,
}

struct ResidualTrace<T> {
    x: Tensor<T>,
    h_pre: Tensor<T>,
    h: Tensor<T>,
    y_pre: Tensor<T>,
}

struct StageTrace<T> {
    x: Tensor<T>,
    down_pre: Tensor<T>,
    residual: Vec<ResidualTrace<T>>,
}

struct DecoderTrace<T> {
    x: Tensor<T>,
    pre: Tensor<T>,
}

/// Saved activations of one forward pass.
pub struct ForwardTrace<T> {
    stages: Vec<StageTrace<T>>,
    decoder: Vec<DecoderTrace<T>>,
}

impl<T: Real> ForwardTrace<T> {
    /// Smallest distance of any ReLU input from the kink at zero.
    pub fn kink_margin(&self) -> f64 {
        let last = self.decoder.len().saturating_sub(1);
        let mut inputs: Vec<&Tensor<T>> = Vec::new();
        for s in &self.stages {
            inputs.push(&s.down_pre);
            for r in &s.residual {
                inputs.push(&r.h_pre);
                inputs.push(&r.y_pre);
            }
        }
        inputs.extend(self.decoder[..last].iter().map(|d| &d.pre));
        inputs
            .iter()
            .flat_map(|t| t.data().iter().map(|v| v.as_f64().abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

impl<T: Real> AutoencoderModel<T> {
    /// Deterministic from `seed`; all biases start at zero.
    pub fn build(arch: &ArchitectureConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut encoder = Vec::with_capacity(arch.n_down);
        let mut c_prev = arch.input_channels;
        for s in 0..arch.n_down {
            let c = arch.stage_channels(s);
            let down = Conv1d::init(c_prev, c, arch.kernel_down, 2, &mut rng);
            let residual = (0..arch.residual_per_stage)
                .map(|_| ResidualBlock {
                    conv1: Conv1d::init(c, c, arch.kernel_res, 1, &mut rng),
                    conv2: Conv1d::init(c, c, arch.kernel_res, 1, &mut rng),
                })
                .collect();
            encoder.push(EncoderStage { down, residual });
            c_prev = c;
        }
        let decoder = (0..arch.n_down)
            .rev()
            .map(|s| {
                let c_out = if s == 0 { arch.input_channels } else { arch.stage_channels(s - 1) };
                ConvTranspose1d::init(arch.stage_channels(s), c_out, arch.kernel_down, 2, &mut rng)
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            encoder,
            decoder,
            stage_lengths: arch.stage_lengths(),
        })
    }

    pub fn arch(&self) -> &ArchitectureConfig {
        &self.arch
    }

    pub fn latent_shape(&self) -> (usize, usize) {
        (self.arch.latent_channels(), self.arch.latent_len())
    }

    pub fn latent_rate_hz(&self) -> f64 {
        self.arch.latent_rate_hz()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, n) = x.shape();
        if c != self.arch.input_channels || n != self.arch.input_len {
            return Err(Error::Shape(format!(
                "autoencoder expects (B, {}, {}), got {:?}",
                self.arch.input_channels,
                self.arch.input_len,
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for stage in &self.encoder {
            h = relu(&stage.down.forward(&h)?);
            for block in &stage.residual {
                let inner = relu(&block.conv1.forward(&h)?);
                let mut y = block.conv2.forward(&inner)?;
                y.add_assign(&h)?;
                h = relu(&y);
            }
        }
        Ok(h)
    }

    pub fn decode(&self, latent: &Tensor<T>) -> Result<Tensor<T>> {
        let (c_lat, n_lat) = self.latent_shape();
        if latent.channels() != c_lat || latent.len_time() != n_lat {
            return Err(Error::Shape(format!(
                "decoder expects latent (B, {c_lat}, {n_lat}), got {:?}",
                latent.shape()
            )));
        }
        let mut h = latent.clone();
        let last = self.decoder.len() - 1;
        for (j, layer) in self.decoder.iter().enumerate() {
            let target = self.stage_lengths[self.arch.n_down - 1 - j];
            let pre = layer.forward(&h, target)?;
            h = if j == last { pre } else { relu(&pre) };
        }
        Ok(h)
    }

    pub fn reconstruct(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.decode(&self.encode(x)?)
    }

    /// Forward pass keeping what [`Self::backward`] needs.
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardTrace<T>)> {
        self.check_input(x)?;
        let mut stages = Vec::with_capacity(self.encoder.len());
        let mut h = x.clone();
        for stage in &self.encoder {
            let down_pre = stage.down.forward(&h)?;
            let stage_in = std::mem::replace(&mut h, relu(&down_pre));
            let mut residual = Vec::with_capacity(stage.residual.len());
            for block in &stage.residual {
                let h_pre = block.conv1.forward(&h)?;
                let inner = relu(&h_pre);
                let mut y_pre = block.conv2.forward(&inner)?;
                y_pre.add_assign(&h)?;
                let out = relu(&y_pre);
                residual.push(ResidualTrace {
                    x: std::mem::replace(&mut h, out),
                    h_pre,
                    h: inner,
                    y_pre,
                });
            }
            stages.push(StageTrace {
                x: stage_in,
                down_pre,
                residual,
            });
        }
        let mut decoder = Vec::with_capacity(self.decoder.len());
        let last = self.decoder.len() - 1;
        for (j, layer) in self.decoder.iter().enumerate() {
            let target = self.stage_lengths[self.arch.n_down - 1 - j];
            let pre = layer.forward(&h, target)?;
            let next = if j == last { pre.clone() } else { relu(&pre) };
            decoder.push(DecoderTrace {
                x: std::mem::replace(&mut h, next),
                pre,
            });
        }
        Ok((h, ForwardTrace { stages, decoder }))
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, trace: &ForwardTrace<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        let last = self.decoder.len() - 1;
        for (j, (layer, t)) in self.decoder.iter_mut().zip(&trace.decoder).enumerate().rev() {
            if j != last {
                g = relu_backward(&t.pre, &g)?;
            }
            g = layer.backward(&t.x, &g)?;
        }
        for (stage, t) in self.encoder.iter_mut().zip(&trace.stages).rev() {
            for (block, r) in stage.residual.iter_mut().zip(&t.residual).rev() {
                let g_pre = relu_backward(&r.y_pre, &g)?;
                let g_inner = block.conv2.backward(&r.h, &g_pre)?;
                let g_h = relu_backward(&r.h_pre, &g_inner)?;
                g = block.conv1.backward(&r.x, &g_h)?;
                g.add_assign(&g_pre)?;
            }
            g = relu_backward(&t.down_pre, &g)?;
            g = stage.down.backward(&t.x, &g)?;
        }
        Ok(g)
    }

    /// Every trainable parameter in checkpoint order, with its name.
    pub fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (s, stage) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{s}.down.weight"), &stage.down.weight));
            out.push((format!("encoder.{s}.down.bias"), &stage.down.bias));
            for (r, block) in stage.residual.iter().enumerate() {
                out.push((format!("encoder.{s}.res{r}.conv1.weight"), &block.conv1.weight));
                out.push((format!("encoder.{s}.res{r}.conv1.bias"), &block.conv1.bias));
                out.push((format!("encoder.{s}.res{r}.conv2.weight"), &block.conv2.weight));
                out.push((format!("encoder.{s}.res{r}.conv2.bias"), &block.conv2.bias));
            }
        }
        for (j, layer) in self.decoder.iter().enumerate() {
            out.push((format!("decoder.{j}.weight"), &layer.weight));
            out.push((format!("decoder.{j}.bias"), &layer.bias));
        }
        out
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }

    /// Mutable parameters, same order as [`Self::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for stage in &mut self.encoder {
            out.extend(stage.down.params_mut());
            for block in &mut stage.residual {
                out.extend(block.conv1.params_mut());
                out.extend(block.conv2.params_mut());
            }
        }
        for layer in &mut self.decoder {
            out.extend(layer.params_mut());
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// Copies the weights into another precision.
    pub fn cast<U: Real>(&self) -> AutoencoderModel<U> {
        AutoencoderModel {
            arch: self.arch.clone(),
            encoder: self
                .encoder
                .iter()
                .map(|s| EncoderStage {
                    down: s.down.cast(),
                    residual: s
                        .residual
                        .iter()
                        .map(|b| ResidualBlock {
                            conv1: b.conv1.cast(),
                            conv2: b.conv2.cast(),
                        })
                        .collect(),
                })
                .collect(),
            decoder: self.decoder.iter().map(|l| l.cast()).collect(),
            stage_lengths: self.stage_lengths.clone(),
        }
    }
}

impl AutoencoderModel<f32> {
    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        self.named_params()
            .into_iter()
            .map(|(name, p)| NamedTensor {
                name,
                dims: p.dims().to_vec(),
                values: p.value.clone(),
            })
            .collect()
    }

    /// Fills parameters from checkpoint tensors; every tensor must be present
    /// with matching dims.
    pub fn load_named_tensors(arch: &ArchitectureConfig, tensors: &[NamedTensor]) -> Result<Self> {
        let mut model = Self::build(arch, 0)?;
        let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        for (name, param) in names.iter().zip(model.params_mut()) {
            let t = tensors.iter().find(|t| &t.name == name).ok_or_else(|| Error::Checkpoint {
                name: name.clone(),
                reason: "missing from checkpoint".into(),
            })?;
            if t.dims != param.dims() {
                return Err(Error::Checkpoint {
                    name: name.clone(),
                    reason: format!("dims {:?} in file, model expects {:?}", t.dims, param.dims()),
                });
            }
            *param = Param::new(&t.dims, t.values.clone())?;
        }
        if let Some(extra) = tensors.iter().find(|t| !names.contains(&t.name)) {
            return Err(Error::Checkpoint {
                name: extra.name.clone(),
                reason: "not part of this architecture".into(),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.to_named_tensors())
    }

    pub fn load(path: &Path, arch: &ArchitectureConfig) -> Result<Self> {
        Self::load_named_tensors(arch, &read_checkpoint(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noise(shape: (usize, usize, usize), seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.0 * shape.1 * shape.2;
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn small() -> ArchitectureConfig {
        ArchitectureConfig {
            n_down: 2,
            base_channels: 2,
            input_len: 200,
            ..Default::default()
        }
    }

    #[test]
    fn default_latent_shape() {
        let arch = ArchitectureConfig::default();
        assert_eq!(arch.stage_lengths(), vec![3000, 1500, 750, 375]);
        assert_eq!((arch.latent_channels(), arch.latent_len()), (64, 188));
        assert_eq!(arch.latent_rate_hz(), 6.25);
        let one = ArchitectureConfig { n_down: 1, ..Default::default() };
        assert_eq!((one.latent_channels(), one.latent_len()), (8, 1500));
    }

    #[test]
    fn too_deep_is_rejected() {
        let arch = ArchitectureConfig { n_down: 9, ..Default::default() };
        let err = arch.validate().unwrap_err();
        assert!(err.to_string().contains("latent length"));
        assert!(AutoencoderModel::<f32>::build(&arch, 0).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let a = AutoencoderModel::<f32>::build(&small(), 5).unwrap();
        let b = AutoencoderModel::<f32>::build(&small(), 5).unwrap();
        let c = AutoencoderModel::<f32>::build(&small(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.named_params().iter().filter(|(n, _)| n.ends_with("bias")).all(|(_, p)| p.value.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn shapes_through_the_model() {
        let m = AutoencoderModel::<f32>::build(&small(), 1).unwrap();
        let x = noise((2, 3, 200), 0);
        let z = m.encode(&x).unwrap();
        assert_eq!(z.shape(), (2, 4, 50));
        assert_eq!(m.decode(&z).unwrap().shape(), (2, 3, 200));
        assert!(m.encode(&noise((1, 3, 199), 0)).is_err());
        assert!(m.decode(&noise((1, 4, 49), 0)).is_err());
    }

    #[test]
    fn zero_input_stays_finite() {
        let m = AutoencoderModel::<f32>::build(&ArchitectureConfig::default(), 1).unwrap();
        let y = m.reconstruct(&Tensor::zeros(1, 3, 3000)).unwrap();
        assert!(y.all_finite());
    }

    #[test]
    fn zero_latent_decodes_to_bias_only() {
        let mut m = AutoencoderModel::<f32>::build(&small(), 2).unwrap();
        let last = m.decoder.len() - 1;
        m.decoder[last].bias.value = vec![0.5, -1.0, 2.0];
        let y = m.decode(&Tensor::zeros(1, 4, 50)).unwrap();
        for (c, want) in [0.5f32, -1.0, 2.0].into_iter().enumerate() {
            assert!(y.row(0, c).iter().all(|&v| v == want));
        }
    }

    #[test]
    fn batch_rows_are_independent() {
        let m = AutoencoderModel::<f32>::build(&small(), 3).unwrap();
        let x = noise((2, 3, 200), 9);
        let both = m.encode(&x).unwrap();
        for b in 0..2 {
            let single = Tensor::from_vec((1, 3, 200), x.sample(b).to_vec()).unwrap();
            assert_eq!(m.encode(&single).unwrap().sample(0), both.sample(b));
        }
    }

    #[test]
    fn shift_by_sixteen_moves_latent_one_step() {
        let arch = ArchitectureConfig { input_len: 800, ..Default::default() };
        let m = AutoencoderModel::<f32>::build(&arch, 4).unwrap();
        let x = noise((1, 3, 800), 11);
        let mut shifted = Tensor::zeros(1, 3, 800);
        for c in 0..3 {
            shifted.row_mut(0, c)[16..].copy_from_slice(&x.row(0, c)[..784]);
        }
        let z = m.encode(&x).unwrap();
        let zs = m.encode(&shifted).unwrap();
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for c in 0..z.channels() {
            for t in 8..40 {
                let a = z.row(0, c)[t] as f64;
                num += (zs.row(0, c)[t + 1] as f64 - a).powi(2);
                den += a * a;
            }
        }
        assert!((num / den).sqrt() < 0.1, "relative error {}", (num / den).sqrt());
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rcvw");
        let m = AutoencoderModel::<f32>::build(&small(), 8).unwrap();
        m.save(&path).unwrap();
        let back = AutoencoderModel::load(&path, &small()).unwrap();
        assert_eq!(back, m);
        let x = noise((1, 3, 200), 1);
        assert_eq!(back.reconstruct(&x).unwrap(), m.reconstruct(&x).unwrap());
    }

    #[test]
    fn checkpoint_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rcvw");
        AutoencoderModel::<f32>::build(&small(), 8).unwrap().save(&path).unwrap();

        let other = ArchitectureConfig { base_channels: 3, ..small() };
        let err = AutoencoderModel::load(&path, &other).unwrap_err();
        assert!(err.to_string().contains("encoder.0.down.weight"), "{err}");

        let deeper = ArchitectureConfig { n_down: 3, ..small() };
        assert!(AutoencoderModel::load(&path, &deeper).is_err());

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(AutoencoderModel::load(&path, &small()).is_err());
    }
}
