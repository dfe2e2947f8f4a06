use super::tensor::{Param, Real, Tensor};
use crate::error::{Error, Result};

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize with batch statistics and update the running averages.
    Train,
    /// Normalize with the running averages.
    Infer,
}

/// Per-channel normalization over the (batch, time) axes.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm1d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Saved activations for the train-mode backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
}

/// Per-channel mean and biased variance over (batch, time).
pub fn channel_moments<T: Real>(x: &Tensor<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (b, c, n) = x.shape();
    if b == 0 || n == 0 {
        return Err(Error::Empty(format!("batch norm over shape {:?}", x.shape())));
    }
    let count = (b * n) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let s: f64 = (0..b).flat_map(|bi| x.row(bi, ch)).map(|v| v.as_f64()).sum();
        mean[ch] = s / count;
        let ss: f64 = (0..b)
            .flat_map(|bi| x.row(bi, ch))
            .map(|v| (v.as_f64() - mean[ch]).powi(2))
            .sum();
        var[ch] = ss / count;
    }
    Ok((mean, var))
}

impl<T: Real> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(&[channels], T::one()),
            beta: Param::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: NormMode) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let (b, c, _) = x.shape();
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batch_norm: channel axis has {c} entries, layer has {}",
                self.channels()
            )));
        }
        if b == 0 {
            return Err(Error::Empty("batch_norm: zero-size batch".into()));
        }
        let (mean, var) = match mode {
            NormMode::Train => {
                let (mean, var) = channel_moments(x)?;
                for ch in 0..c {
                    self.running_mean[ch] = BATCH_NORM_MOMENTUM * self.running_mean[ch]
                        + (1.0 - BATCH_NORM_MOMENTUM) * mean[ch];
                    self.running_var[ch] = BATCH_NORM_MOMENTUM * self.running_var[ch]
                        + (1.0 - BATCH_NORM_MOMENTUM) * var[ch];
                }
                (mean, var)
            }
            NormMode::Infer => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<T> = var
            .iter()
            .map(|v| T::of(1.0 / (v + BATCH_NORM_EPS).sqrt()))
            .collect();
        let mut x_hat = x.clone();
        let mut y = x.clone();
        for bi in 0..b {
            for ch in 0..c {
                let m = T::of(mean[ch]);
                let (g, be) = (self.gamma.value[ch], self.beta.value[ch]);
                let xh = x_hat.row_mut(bi, ch);
                for v in xh.iter_mut() {
                    *v = (*v - m) * inv_std[ch];
                }
                for (o, &h) in y.row_mut(bi, ch).iter_mut().zip(x_hat.row(bi, ch)) {
                    *o = g * h + be;
                }
            }
        }
        Ok((y, BatchNormCache { x_hat, inv_std }))
    }

    /// Train-mode backward; accumulates gamma/beta gradients.
    pub fn backward(&mut self, cache: &BatchNormCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        cache.x_hat.check_same_shape(grad_out, "batch_norm backward")?;
        let (b, c, n) = grad_out.shape();
        let count = T::of((b * n) as f64);
        let mut dx = Tensor::zeros(b, c, n);
        for ch in 0..c {
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for bi in 0..b {
                for (&g, &h) in grad_out.row(bi, ch).iter().zip(cache.x_hat.row(bi, ch)) {
                    sum_g += g;
                    sum_gx += g * h;
                }
            }
            self.beta.grad[ch] += sum_g;
            self.gamma.grad[ch] += sum_gx;
            let gamma = self.gamma.value[ch];
            let scale = gamma * cache.inv_std[ch] / count;
            for bi in 0..b {
                let go = grad_out.row(bi, ch).to_vec();
                let xh = cache.x_hat.row(bi, ch).to_vec();
                for ((d, g), h) in dx.row_mut(bi, ch).iter_mut().zip(go).zip(xh) {
                    *d = scale * (count * g - sum_g - h * sum_gx);
                }
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_formula() {
        let mut bn = BatchNorm1d::<f64>::new(1);
        let x = Tensor::from_vec((1, 1, 4), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = bn.forward(&x, NormMode::Train).unwrap();
        for (a, b) in y.data().iter().zip([-1.3416, -0.4472, 0.4472, 1.3416]) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn train_mode_contract_and_running_stats() {
        let mut bn = BatchNorm1d::<f32>::new(2);
        let data: Vec<f32> = (0..2 * 2 * 10).map(|i| ((i * 37) % 11) as f32 * 0.7 + 3.0).collect();
        let x = Tensor::from_vec((2, 2, 10), data).unwrap();
        let (y, _) = bn.forward(&x, NormMode::Train).unwrap();
        let (mean, var) = channel_moments(&y).unwrap();
        for ch in 0..2 {
            assert!(mean[ch].abs() < 1e-5);
            assert!((var[ch] - 1.0).abs() < 1e-3);
        }
        let (m0, _) = channel_moments(&x).unwrap();
        assert!((bn.running_mean[0] - 0.1 * m0[0]).abs() < 1e-9);
    }

    #[test]
    fn infer_with_unit_stats_is_identity() {
        let mut bn = BatchNorm1d::<f64>::new(1);
        let x = Tensor::from_vec((1, 1, 3), vec![0.5, -2.0, 7.0]).unwrap();
        let (y, _) = bn.forward(&x, NormMode::Infer).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-4 * b.abs().max(1.0));
        }
    }

    #[test]
    fn empty_batch_errors() {
        let mut bn = BatchNorm1d::<f32>::new(1);
        assert!(bn.forward(&Tensor::zeros(0, 1, 4), NormMode::Train).is_err());
    }
}
