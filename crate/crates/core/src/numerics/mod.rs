//! Dense numerics for the autoencoder: tensors, the five layer types with
//! analytic backward passes, Adam, and the finite-difference oracle.

mod activation;
mod adam;
mod batch_norm;
pub mod checkpoint;
mod conv;
mod gradcheck;
mod tensor;

pub use activation::{relu, relu_backward};
pub use adam::{adam_step, Adam};
pub use batch_norm::{channel_moments, BatchNorm1d, BatchNormCache, NormMode, BATCH_NORM_EPS};
pub use conv::{conv_output_len, same_padding, Conv1d, ConvTranspose1d};
pub use gradcheck::{finite_difference_gradient, relative_error};
pub use tensor::{Param, ParamTensor, Real, Tensor, TensorB};
