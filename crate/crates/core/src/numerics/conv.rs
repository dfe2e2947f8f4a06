//! Strided 1D cross-correlation ("half"/same padding) and its transpose.
//!
//! All three kernels below share one index map: output step `t` reads input
//! position `t * stride + k - pad`. Strided access is turned into contiguous
//! slices by splitting each input row into `stride` phases.

use rand::Rng;

use super::tensor::{Param, Real, Tensor};
use crate::error::{Error, Result};

/// Output length of a same-padded convolution.
pub fn conv_output_len(input_len: usize, stride: usize) -> usize {
    input_len.div_ceil(stride)
}

/// Left padding of a same-padded convolution; the remainder goes right.
pub fn same_padding(input_len: usize, output_len: usize, stride: usize, kernel: usize) -> usize {
    ((output_len.saturating_sub(1)) * stride + kernel).saturating_sub(input_len) / 2
}

struct Geometry {
    stride: usize,
    pad: usize,
    kernel: usize,
    in_len: usize,
    out_len: usize,
}

impl Geometry {
    fn phase_len(&self, p: usize) -> usize {
        if p >= self.in_len {
            0
        } else {
            (self.in_len - p).div_ceil(self.stride)
        }
    }

    /// For tap `k`: phase index, phase offset, and valid output range.
    fn tap(&self, k: usize) -> Option<(usize, isize, usize, usize)> {
        let d = k as isize - self.pad as isize;
        let s = self.stride as isize;
        let p = d.rem_euclid(s) as usize;
        let q = d.div_euclid(s);
        let t0 = (-q).max(0) as usize;
        let t1 = (self.phase_len(p) as isize - q).min(self.out_len as isize);
        if t1 <= t0 as isize {
            return None;
        }
        Some((p, q, t0, t1 as usize))
    }
}

fn split_phases<T: Real>(row: &[T], stride: usize) -> Vec<Vec<T>> {
    (0..stride)
        .map(|p| row.iter().skip(p).step_by(stride).copied().collect())
        .collect()
}

/// `out[co][t] += sum_{ci,k} w[co][ci][k] * x[ci][t*s + k - pad]`
fn correlate<T: Real>(x: &[T], w: &[T], c_in: usize, c_out: usize, g: &Geometry, out: &mut [T]) {
    let k_len = g.kernel;
    for ci in 0..c_in {
        let row = &x[ci * g.in_len..(ci + 1) * g.in_len];
        let phases = if g.stride == 1 {
            vec![row.to_vec()]
        } else {
            split_phases(row, g.stride)
        };
        for k in 0..k_len {
            let Some((p, q, t0, t1)) = g.tap(k) else {
                continue;
            };
            let src = &phases[p][(t0 as isize + q) as usize..(t1 as isize + q) as usize];
            for co in 0..c_out {
                let wv = w[(co * c_in + ci) * k_len + k];
                if wv == T::zero() {
                    continue;
                }
                let dst = &mut out[co * g.out_len + t0..co * g.out_len + t1];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += wv * s;
                }
            }
        }
    }
}

/// Adjoint of [`correlate`] with respect to `x`: scatter-add into `dx`.
fn correlate_adjoint<T: Real>(
    gout: &[T],
    w: &[T],
    c_in: usize,
    c_out: usize,
    g: &Geometry,
    dx: &mut [T],
) {
    let k_len = g.kernel;
    for ci in 0..c_in {
        let mut phases: Vec<Vec<T>> = (0..g.stride)
            .map(|p| vec![T::zero(); g.phase_len(p)])
            .collect();
        for k in 0..k_len {
            let Some((p, q, t0, t1)) = g.tap(k) else {
                continue;
            };
            let dst = &mut phases[p][(t0 as isize + q) as usize..(t1 as isize + q) as usize];
            for co in 0..c_out {
                let wv = w[(co * c_in + ci) * k_len + k];
                if wv == T::zero() {
                    continue;
                }
                let src = &gout[co * g.out_len + t0..co * g.out_len + t1];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += wv * s;
                }
            }
        }
        let row = &mut dx[ci * g.in_len..(ci + 1) * g.in_len];
        for (j, v) in row.iter_mut().enumerate() {
            *v += phases[j % g.stride][j / g.stride];
        }
    }
}

/// `dw[co][ci][k] += sum_t gout[co][t] * x[ci][t*s + k - pad]`
fn correlate_weight_grad<T: Real>(
    x: &[T],
    gout: &[T],
    c_in: usize,
    c_out: usize,
    g: &Geometry,
    dw: &mut [T],
) {
    let k_len = g.kernel;
    for ci in 0..c_in {
        let row = &x[ci * g.in_len..(ci + 1) * g.in_len];
        let phases = if g.stride == 1 {
            vec![row.to_vec()]
        } else {
            split_phases(row, g.stride)
        };
        for k in 0..k_len {
            let Some((p, q, t0, t1)) = g.tap(k) else {
                continue;
            };
            let src = &phases[p][(t0 as isize + q) as usize..(t1 as isize + q) as usize];
            for co in 0..c_out {
                let go = &gout[co * g.out_len + t0..co * g.out_len + t1];
                dw[(co * c_in + ci) * k_len + k] += lane_dot(go, src);
            }
        }
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
fn lane_dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

fn uniform_fan_in<T: Real, R: Rng>(rng: &mut R, n: usize, fan_in: usize) -> Vec<T> {
    let bound = (1.0 / fan_in as f64).sqrt();
    (0..n)
        .map(|_| T::of(rng.random_range(-bound..=bound)))
        .collect()
}

/// Same-padded strided 1D convolution, weights `(C_out, C_in, K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
}

impl<T: Real> Conv1d<T> {
    /// Fan-in uniform weights, zero bias.
    pub fn init<R: Rng>(c_in: usize, c_out: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        let w = uniform_fan_in(rng, c_out * c_in * kernel, c_in * kernel);
        Self {
            weight: Param::new(&[c_out, c_in, kernel], w).expect("sizes agree"),
            bias: Param::zeros(&[c_out]),
            stride,
        }
    }

    pub fn from_parts(weight: Param<T>, bias: Param<T>, stride: usize) -> Result<Self> {
        if weight.dims().len() != 3 || bias.dims() != [weight.dims()[0]] || stride == 0 {
            return Err(Error::Shape(format!(
                "conv1d weight {:?} / bias {:?} / stride {stride} inconsistent",
                weight.dims(),
                bias.dims()
            )));
        }
        Ok(Self {
            weight,
            bias,
            stride,
        })
    }

    pub fn c_out(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.dims()[2]
    }

    fn geometry(&self, in_len: usize) -> Geometry {
        let out_len = conv_output_len(in_len, self.stride);
        Geometry {
            stride: self.stride,
            pad: same_padding(in_len, out_len, self.stride, self.kernel()),
            kernel: self.kernel(),
            in_len,
            out_len,
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.c_in() {
            return Err(Error::Shape(format!(
                "conv1d: channel axis has {} entries, weights expect {}",
                x.channels(),
                self.c_in()
            )));
        }
        if x.len_time() == 0 {
            return Err(Error::Shape("conv1d: time axis is empty".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let g = self.geometry(x.len_time());
        let (c_in, c_out) = (self.c_in(), self.c_out());
        let mut out = Tensor::zeros(x.batch(), c_out, g.out_len);
        for b in 0..x.batch() {
            let dst = out.sample_mut(b);
            for co in 0..c_out {
                dst[co * g.out_len..(co + 1) * g.out_len].fill(self.bias.value[co]);
            }
            correlate(x.sample(b), &self.weight.value, c_in, c_out, &g, dst);
        }
        Ok(out)
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let g = self.geometry(x.len_time());
        let (c_in, c_out) = (self.c_in(), self.c_out());
        if grad_out.shape() != (x.batch(), c_out, g.out_len) {
            return Err(Error::Shape(format!(
                "conv1d backward: gradient shape {:?}, expected {:?}",
                grad_out.shape(),
                (x.batch(), c_out, g.out_len)
            )));
        }
        let mut dx = Tensor::zeros(x.batch(), c_in, g.in_len);
        for b in 0..x.batch() {
            let go = grad_out.sample(b);
            for co in 0..c_out {
                self.bias.grad[co] += go[co * g.out_len..(co + 1) * g.out_len].iter().copied().sum();
            }
            correlate_weight_grad(x.sample(b), go, c_in, c_out, &g, &mut self.weight.grad);
            correlate_adjoint(go, &self.weight.value, c_in, c_out, &g, dx.sample_mut(b));
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn cast<U: Real>(&self) -> Conv1d<U> {
        Conv1d {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            stride: self.stride,
        }
    }
}

/// Transposed (fractionally strided) convolution, weights `(C_in, C_out, K)`.
///
/// With shared weights this is the exact adjoint of [`Conv1d`] mapping
/// `target_len -> input_len`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose1d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
}

impl<T: Real> ConvTranspose1d<T> {
    pub fn init<R: Rng>(c_in: usize, c_out: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        let w = uniform_fan_in(rng, c_in * c_out * kernel, c_in * kernel);
        Self {
            weight: Param::new(&[c_in, c_out, kernel], w).expect("sizes agree"),
            bias: Param::zeros(&[c_out]),
            stride,
        }
    }

    pub fn from_parts(weight: Param<T>, bias: Param<T>, stride: usize) -> Result<Self> {
        if weight.dims().len() != 3 || bias.dims() != [weight.dims()[1]] || stride == 0 {
            return Err(Error::Shape(format!(
                "conv1d_transposed weight {:?} / bias {:?} / stride {stride} inconsistent",
                weight.dims(),
                bias.dims()
            )));
        }
        Ok(Self {
            weight,
            bias,
            stride,
        })
    }

    pub fn c_in(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn c_out(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.dims()[2]
    }

    fn geometry(&self, in_len: usize, target_len: usize) -> Result<Geometry> {
        let lo = (self.stride * in_len + 1).saturating_sub(self.stride);
        let hi = self.stride * in_len;
        if in_len == 0 || target_len < lo.max(1) || target_len > hi {
            return Err(Error::InvalidArgument(format!(
                "conv1d_transposed: target length {target_len} unreachable from {in_len} \
                 steps at stride {} (valid {lo}..={hi})",
                self.stride
            )));
        }
        // Geometry of the forward conv this layer is the adjoint of.
        Ok(Geometry {
            stride: self.stride,
            pad: same_padding(target_len, in_len, self.stride, self.kernel()),
            kernel: self.kernel(),
            in_len: target_len,
            out_len: in_len,
        })
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.c_in() {
            return Err(Error::Shape(format!(
                "conv1d_transposed: channel axis has {} entries, weights expect {}",
                x.channels(),
                self.c_in()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>, target_len: usize) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let g = self.geometry(x.len_time(), target_len)?;
        let (c_in, c_out) = (self.c_in(), self.c_out());
        let mut out = Tensor::zeros(x.batch(), c_out, target_len);
        for b in 0..x.batch() {
            let dst = out.sample_mut(b);
            for co in 0..c_out {
                dst[co * target_len..(co + 1) * target_len].fill(self.bias.value[co]);
            }
            // The adjoint conv has c_out (its inputs) = our c_out and
            // its outputs = our c_in.
            correlate_adjoint(x.sample(b), &self.weight.value, c_out, c_in, &g, dst);
        }
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let target_len = grad_out.len_time();
        let g = self.geometry(x.len_time(), target_len)?;
        let (c_in, c_out) = (self.c_in(), self.c_out());
        if grad_out.shape() != (x.batch(), c_out, target_len) {
            return Err(Error::Shape(format!(
                "conv1d_transposed backward: gradient shape {:?}, expected {:?}",
                grad_out.shape(),
                (x.batch(), c_out, target_len)
            )));
        }
        let mut dx = Tensor::zeros(x.batch(), c_in, x.len_time());
        for b in 0..x.batch() {
            let go = grad_out.sample(b);
            for co in 0..c_out {
                self.bias.grad[co] += go[co * target_len..(co + 1) * target_len].iter().copied().sum();
            }
            correlate_weight_grad(go, x.sample(b), c_out, c_in, &g, &mut self.weight.grad);
            correlate(go, &self.weight.value, c_out, c_in, &g, dx.sample_mut(b));
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn cast<U: Real>(&self) -> ConvTranspose1d<U> {
        ConvTranspose1d {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            stride: self.stride,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(w: Vec<f64>, dims: [usize; 3], stride: usize) -> Conv1d<f64> {
        let c_out = dims[0];
        Conv1d::from_parts(Param::new(&dims, w).unwrap(), Param::zeros(&[c_out]), stride).unwrap()
    }

    fn tconv(w: Vec<f64>, dims: [usize; 3], stride: usize) -> ConvTranspose1d<f64> {
        let c_out = dims[1];
        ConvTranspose1d::from_parts(Param::new(&dims, w).unwrap(), Param::zeros(&[c_out]), stride)
            .unwrap()
    }

    fn row(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec((1, 1, v.len()), v.to_vec()).unwrap()
    }

    /// Direct-sum oracle with explicit zero padding.
    fn brute_conv(x: &[f64], w: &[f64], stride: usize) -> Vec<f64> {
        let n = x.len();
        let k = w.len();
        let out_len = n.div_ceil(stride);
        let pad = ((out_len - 1) * stride + k).saturating_sub(n) / 2;
        (0..out_len)
            .map(|t| {
                (0..k)
                    .map(|j| {
                        let idx = (t * stride + j) as isize - pad as isize;
                        if idx >= 0 && (idx as usize) < n {
                            w[j] * x[idx as usize]
                        } else {
                            0.0
                        }
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn identity_kernel() {
        let c = conv(vec![0.0, 1.0, 0.0], [1, 1, 3], 1);
        let y = c.forward(&row(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn box_kernel_half_padding() {
        let c = conv(vec![1.0, 1.0, 1.0], [1, 1, 3], 1);
        let x = [1.0, 1.0, 1.0, 1.0];
        let expected = brute_conv(&x, &[1.0, 1.0, 1.0], 1);
        assert_eq!(expected, vec![2.0, 3.0, 3.0, 2.0]);
        assert_eq!(c.forward(&row(&x)).unwrap().data(), expected.as_slice());
    }

    #[test]
    fn stride_two_halves_length() {
        let c: Conv1d<f32> = Conv1d::init(3, 8, 7, 2, &mut rand::rng());
        let x = Tensor::zeros(1, 3, 3000);
        assert_eq!(c.forward(&x).unwrap().len_time(), 1500);
        let mut n = 3000;
        for expected in [1500, 750, 375, 188] {
            n = conv_output_len(n, 2);
            assert_eq!(n, expected);
        }
    }

    #[test]
    fn strided_matches_brute_force() {
        let x: Vec<f64> = (0..11).map(|i| ((i * 7) % 5) as f64 - 1.5).collect();
        for (k, stride) in [(7, 2), (3, 2), (2, 2), (4, 3), (5, 1)] {
            let w: Vec<f64> = (0..k).map(|i| 0.3 * i as f64 - 0.4).collect();
            let c = conv(w.clone(), [1, 1, k], stride);
            let got = c.forward(&row(&x)).unwrap();
            let want = brute_conv(&x, &w, stride);
            for (a, b) in got.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "k={k} s={stride}");
            }
        }
    }

    #[test]
    fn channel_mismatch_names_axis() {
        let c = conv(vec![1.0; 6], [1, 2, 3], 1);
        let err = c.forward(&row(&[1.0, 2.0])).unwrap_err().to_string();
        assert!(err.contains("channel axis"), "{err}");
    }

    #[test]
    fn transposed_scatter_add() {
        let t = tconv(vec![1.0, 1.0], [1, 1, 2], 2);
        let y = t.forward(&row(&[1.0, 2.0]), 4).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn transposed_delta_is_identity() {
        let t = tconv(vec![0.0, 1.0, 0.0], [1, 1, 3], 1);
        let x = [0.5, -1.0, 2.0, 3.5, 0.0];
        assert_eq!(t.forward(&row(&x), 5).unwrap().data(), &x);
    }

    #[test]
    fn transposed_length_contract() {
        let t: ConvTranspose1d<f32> = ConvTranspose1d::init(4, 2, 7, 2, &mut rand::rng());
        let x = Tensor::zeros(1, 4, 1500);
        assert_eq!(t.forward(&x, 3000).unwrap().len_time(), 3000);
        assert_eq!(t.forward(&x, 2999).unwrap().len_time(), 2999);
        assert!(t.forward(&x, 2998).is_err());
        assert!(t.forward(&x, 3001).is_err());
    }

    #[test]
    fn translation_equivariance_interior() {
        let k = 5;
        let w: Vec<f64> = (0..k).map(|i| (i as f64).sin()).collect();
        let c = conv(w, [1, 1, k], 1);
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).cos()).collect();
        let s = 3;
        let mut shifted = vec![0.0; 40];
        shifted[s..].copy_from_slice(&x[..40 - s]);
        let y = c.forward(&row(&x)).unwrap();
        let ys = c.forward(&row(&shifted)).unwrap();
        for t in (k + s)..(40 - k) {
            assert_eq!(ys.data()[t], y.data()[t - s]);
        }
    }
}
