//! Randomized gradient checks for every layer and for the full autoencoder.
//!
//! Each case flattens its inputs and parameters into one vector `theta`,
//! evaluates a scalar objective, and compares the analytic gradient against
//! central finite differences computed in f64. The analytic gradient is taken
//! once in f64 and once on the f32 path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::loss::{reconstruction_loss, reconstruction_loss_grad};
use super::model::{ArchitectureConfig, AutoencoderModel};
use crate::error::Result;
use crate::numerics::{
    finite_difference_gradient, relative_error, relu, relu_backward, BatchNorm1d, Conv1d, ConvTranspose1d,
    NormMode, Param, Real, Tensor,
};

pub const FD_EPSILON: f64 = 1e-6;
/// End-to-end instances keep every ReLU input at least this far from zero.
pub const KINK_MARGIN: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GradCase {
    Conv1d,
    ConvTranspose1d,
    Relu,
    BatchNorm,
    ReconstructionLoss,
    EndToEnd,
}

impl GradCase {
    pub const ALL: [GradCase; 6] = [
        GradCase::Conv1d,
        GradCase::ConvTranspose1d,
        GradCase::Relu,
        GradCase::BatchNorm,
        GradCase::ReconstructionLoss,
        GradCase::EndToEnd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradCase::Conv1d => "conv1d",
            GradCase::ConvTranspose1d => "conv_transpose1d",
            GradCase::Relu => "relu",
            GradCase::BatchNorm => "batch_norm",
            GradCase::ReconstructionLoss => "reconstruction_loss",
            GradCase::EndToEnd => "autoencoder",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckResult {
    pub case: GradCase,
    pub n_coords: usize,
    pub err_f64: f64,
    pub err_f32: f64,
}

/// Random small instance of one case.
#[derive(Clone, Debug)]
struct Instance {
    case: GradCase,
    batch: usize,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    len_in: usize,
    len_out: usize,
    /// Linear probe applied to the layer output.
    probe: Vec<f64>,
    /// Fixed target for the reconstruction loss.
    target: Vec<f64>,
    theta: Vec<f64>,
    arch: Option<ArchitectureConfig>,
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn small_arch() -> ArchitectureConfig {
    ArchitectureConfig {
        n_down: 2,
        base_channels: 2,
        channel_growth: 2,
        kernel_down: 5,
        residual_per_stage: 1,
        kernel_res: 3,
        input_channels: 3,
        input_len: 40,
        sample_rate_hz: 100.0,
    }
}

fn sample_instance(case: GradCase, rng: &mut ChaCha8Rng) -> Instance {
    let batch = rng.random_range(1..=3);
    let c_in = rng.random_range(1..=4);
    let c_out = rng.random_range(1..=4);
    let kernel = rng.random_range(1..=7);
    let stride = rng.random_range(1..=3);
    let len_in = rng.random_range(2..=20);
    let mut inst = Instance {
        case,
        batch,
        c_in,
        c_out,
        kernel,
        stride,
        len_in,
        len_out: len_in,
        probe: Vec::new(),
        target: Vec::new(),
        theta: Vec::new(),
        arch: None,
    };
    match case {
        GradCase::Conv1d => {
            inst.len_out = crate::numerics::conv_output_len(len_in, stride);
            inst.theta = normals(rng, batch * c_in * len_in + c_out * c_in * kernel + c_out);
        }
        GradCase::ConvTranspose1d => {
            inst.len_out = rng.random_range(stride * len_in - stride + 1..=stride * len_in);
            inst.theta = normals(rng, batch * c_in * len_in + c_in * c_out * kernel + c_out);
        }
        GradCase::Relu => {
            inst.c_out = c_in;
            // Keep inputs away from the kink so differences stay one-sided.
            inst.theta = (0..batch * c_in * len_in)
                .map(|_| {
                    let m: f64 = rng.random_range(0.1..1.0);
                    if rng.random_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                })
                .collect();
        }
        GradCase::BatchNorm => {
            inst.c_out = c_in;
            inst.theta = normals(rng, batch * c_in * len_in + 2 * c_in);
        }
        GradCase::ReconstructionLoss => {
            inst.c_out = c_in;
            inst.target = normals(rng, batch * c_in * len_in);
            inst.theta = normals(rng, batch * c_in * len_in);
        }
        GradCase::EndToEnd => {
            let arch = small_arch();
            inst.c_in = arch.input_channels;
            inst.len_in = arch.input_len;
            // Redraw until no ReLU input lies within reach of the difference step.
            loop {
                let model = AutoencoderModel::<f64>::build(&arch, rng.random()).expect("valid arch");
                inst.batch = rng.random_range(1..=2);
                let mut theta = normals(rng, inst.batch * inst.c_in * inst.len_in);
                for p in model.params() {
                    // Nonzero biases so their gradients are exercised away from init.
                    let jitter = if p.dims().len() == 1 { 0.1 } else { 0.0 };
                    theta.extend(p.value.iter().map(|&v| v + jitter * rng.sample::<f64, _>(StandardNormal)));
                }
                inst.theta = theta;
                inst.arch = Some(arch.clone());
                if kink_margin(&inst) >= KINK_MARGIN {
                    break;
                }
            }
        }
    }
    let out_len = match case {
        GradCase::ReconstructionLoss | GradCase::EndToEnd => 0,
        _ => inst.batch * inst.c_out * inst.len_out,
    };
    inst.probe = normals(rng, out_len);
    inst
}

fn take<T: Real>(theta: &[f64], at: &mut usize, n: usize) -> Vec<T> {
    let v = theta[*at..*at + n].iter().map(|&x| T::of(x)).collect();
    *at += n;
    v
}

fn probe_value<T: Real>(out: &Tensor<T>, probe: &[f64]) -> f64 {
    out.data().iter().zip(probe).map(|(o, p)| o.as_f64() * p).sum()
}

fn probe_tensor<T: Real>(shape: (usize, usize, usize), probe: &[f64]) -> Tensor<T> {
    Tensor::from_vec(shape, probe.iter().map(|&p| T::of(p)).collect()).expect("probe sized to output")
}

fn flatten<T: Real>(parts: &[&[T]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().map(|v| v.as_f64())).collect()
}

/// Objective value and analytic gradient at precision `T`.
fn evaluate<T: Real>(inst: &Instance, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut at = 0;
    let x_shape = (inst.batch, inst.c_in, inst.len_in);
    let x_len = inst.batch * inst.c_in * inst.len_in;
    let x = Tensor::<T>::from_vec(x_shape, take(theta, &mut at, x_len))?;
    match inst.case {
        GradCase::Conv1d => {
            let w = Param::new(&[inst.c_out, inst.c_in, inst.kernel], take(theta, &mut at, inst.c_out * inst.c_in * inst.kernel))?;
            let b = Param::new(&[inst.c_out], take(theta, &mut at, inst.c_out))?;
            let mut layer = Conv1d::from_parts(w, b, inst.stride)?;
            let out = layer.forward(&x)?;
            let dx = layer.backward(&x, &probe_tensor(out.shape(), &inst.probe))?;
            let g = flatten(&[dx.data(), &layer.weight.grad, &layer.bias.grad]);
            Ok((probe_value(&out, &inst.probe), g))
        }
        GradCase::ConvTranspose1d => {
            let w = Param::new(&[inst.c_in, inst.c_out, inst.kernel], take(theta, &mut at, inst.c_in * inst.c_out * inst.kernel))?;
            let b = Param::new(&[inst.c_out], take(theta, &mut at, inst.c_out))?;
            let mut layer = ConvTranspose1d::from_parts(w, b, inst.stride)?;
            let out = layer.forward(&x, inst.len_out)?;
            let dx = layer.backward(&x, &probe_tensor(out.shape(), &inst.probe))?;
            let g = flatten(&[dx.data(), &layer.weight.grad, &layer.bias.grad]);
            Ok((probe_value(&out, &inst.probe), g))
        }
        GradCase::Relu => {
            let out = relu(&x);
            let dx = relu_backward(&x, &probe_tensor(out.shape(), &inst.probe))?;
            Ok((probe_value(&out, &inst.probe), flatten(&[dx.data()])))
        }
        GradCase::BatchNorm => {
            let mut bn = BatchNorm1d::<T>::new(inst.c_in);
            bn.gamma = Param::new(&[inst.c_in], take(theta, &mut at, inst.c_in))?;
            bn.beta = Param::new(&[inst.c_in], take(theta, &mut at, inst.c_in))?;
            let (out, cache) = bn.forward(&x, NormMode::Train)?;
            let dx = bn.backward(&cache, &probe_tensor(out.shape(), &inst.probe))?;
            let g = flatten(&[dx.data(), &bn.gamma.grad, &bn.beta.grad]);
            Ok((probe_value(&out, &inst.probe), g))
        }
        GradCase::ReconstructionLoss => {
            let target = probe_tensor::<T>(x_shape, &inst.target);
            let (loss, g) = reconstruction_loss_grad(&target, &x)?;
            Ok((loss, flatten(&[g.data()])))
        }
        GradCase::EndToEnd => {
            let mut model = end_to_end_model::<T>(inst, theta, &mut at)?;
            let (out, trace) = model.forward_train(&x)?;
            let (loss, gout) = reconstruction_loss_grad(&x, &out)?;
            // The input is also the target, so its total gradient has a
            // direct term from the loss on top of the backward pass.
            let (_, g_target) = reconstruction_loss_grad(&out, &x)?;
            let mut dx = model.backward(&trace, &gout)?;
            dx.add_assign(&g_target)?;
            let mut g = flatten(&[dx.data()]);
            for p in model.params() {
                g.extend(p.grad.iter().map(|v| v.as_f64()));
            }
            Ok((loss, g))
        }
    }
}

fn end_to_end_model<T: Real>(inst: &Instance, theta: &[f64], at: &mut usize) -> Result<AutoencoderModel<T>> {
    let arch = inst.arch.as_ref().expect("end-to-end instance has an architecture");
    let mut model = AutoencoderModel::<T>::build(arch, 0)?;
    for p in model.params_mut() {
        let n = p.len();
        p.value = take(theta, at, n);
    }
    Ok(model)
}

fn kink_margin(inst: &Instance) -> f64 {
    let mut at = 0;
    let x_len = inst.batch * inst.c_in * inst.len_in;
    let x = Tensor::<f64>::from_vec((inst.batch, inst.c_in, inst.len_in), take(&inst.theta, &mut at, x_len))
        .expect("input sized to shape");
    let model = end_to_end_model::<f64>(inst, &inst.theta, &mut at).expect("valid instance");
    model.forward_train(&x).expect("valid instance").1.kink_margin()
}

fn objective_f64(inst: &Instance, theta: &[f64]) -> f64 {
    match inst.case {
        GradCase::ReconstructionLoss => {
            let shape = (inst.batch, inst.c_in, inst.len_in);
            let t = probe_tensor::<f64>(shape, &inst.target);
            let y = probe_tensor::<f64>(shape, theta);
            reconstruction_loss(&t, &y).expect("shapes agree")
        }
        _ => evaluate::<f64>(inst, theta).expect("instance is well formed").0,
    }
}

/// Checks one random instance of `case`.
pub fn check_case(case: GradCase, seed: u64) -> Result<GradCheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = sample_instance(case, &mut rng);
    let fd = finite_difference_gradient(|p| objective_f64(&inst, p), &inst.theta, FD_EPSILON);
    let (_, g64) = evaluate::<f64>(&inst, &inst.theta)?;
    let (_, g32) = evaluate::<f32>(&inst, &inst.theta)?;
    Ok(GradCheckResult {
        case,
        n_coords: fd.len(),
        err_f64: relative_error(&g64, &fd),
        err_f32: relative_error(&g32, &fd),
    })
}

/// `instances` random checks of every case.
pub fn gradient_check_suite(instances: usize, seed: u64) -> Result<Vec<GradCheckResult>> {
    let mut out = Vec::with_capacity(instances * GradCase::ALL.len());
    for (ci, &case) in GradCase::ALL.iter().enumerate() {
        for i in 0..instances {
            out.push(check_case(case, seed.wrapping_add((ci * 1_000_003 + i) as u64))?);
        }
    }
    Ok(out)
}
