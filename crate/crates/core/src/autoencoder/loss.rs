use crate::error::Result;
use crate::numerics::{Real, Tensor};

/// Per-sample RMS between channel-centred target and output, averaged over
/// the batch. Returns the loss and its gradient with respect to `output`.
pub fn reconstruction_loss_grad<T: Real>(target: &Tensor<T>, output: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    target.check_same_shape(output, "reconstruction_loss")?;
    let (b, c, n) = target.shape();
    let mut grad = Tensor::zeros(b, c, n);
    if b == 0 {
        return Ok((0.0, grad));
    }
    let mut total = 0.0;
    let mut resid = vec![0.0f64; c * n];
    for bi in 0..b {
        for ch in 0..c {
            let x = target.row(bi, ch);
            let y = output.row(bi, ch);
            let mx = x.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
            let my = y.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
            for t in 0..n {
                resid[ch * n + t] = (x[t].as_f64() - mx) - (y[t].as_f64() - my);
            }
        }
        let rms = (resid.iter().map(|r| r * r).sum::<f64>() / (c * n) as f64).sqrt();
        total += rms;
        if rms > 0.0 {
            // The residual is already zero-mean per channel, so the centring
            // projection leaves it unchanged.
            let scale = -1.0 / (rms * (c * n) as f64 * b as f64);
            for (g, r) in grad.sample_mut(bi).iter_mut().zip(&resid) {
                *g = T::of(scale * r);
            }
        }
    }
    Ok((total / b as f64, grad))
}

pub fn reconstruction_loss<T: Real>(target: &Tensor<T>, output: &Tensor<T>) -> Result<f64> {
    reconstruction_loss_grad(target, output).map(|(l, _)| l)
}
