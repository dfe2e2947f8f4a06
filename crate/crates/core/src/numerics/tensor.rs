use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Scalar type of the numeric kernels. Production runs in `f32`; gradient
/// checks run the same code in `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dense `(batch, channel, time)` array, row-major with time fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    data: Vec<T>,
    shape: (usize, usize, usize),
}

/// Production tensor type.
pub type TensorB = Tensor<f32>;

impl<T: Real> Tensor<T> {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self {
            data: vec![T::zero(); batch * channels * len],
            shape: (batch, channels, len),
        }
    }

    pub fn from_vec(shape: (usize, usize, usize), data: Vec<T>) -> Result<Self> {
        let expected = shape.0 * shape.1 * shape.2;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "tensor data has {} elements, shape {:?} needs {}",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Self { data, shape })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape.0
    }

    pub fn channels(&self) -> usize {
        self.shape.1
    }

    pub fn len_time(&self) -> usize {
        self.shape.2
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// The `(channel, time)` block of one batch entry.
    pub fn sample(&self, b: usize) -> &[T] {
        let stride = self.shape.1 * self.shape.2;
        &self.data[b * stride..(b + 1) * stride]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [T] {
        let stride = self.shape.1 * self.shape.2;
        &mut self.data[b * stride..(b + 1) * stride]
    }

    pub fn row(&self, b: usize, c: usize) -> &[T] {
        let n = self.shape.2;
        let start = (b * self.shape.1 + c) * n;
        &self.data[start..start + n]
    }

    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let n = self.shape.2;
        let start = (b * self.shape.1 + c) * n;
        &mut self.data[start..start + n]
    }

    /// Stacks equally shaped `(C, N)` samples into one batch.
    pub fn stack(samples: &[&[T]], channels: usize, len: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(samples.len() * channels * len);
        for (i, s) in samples.iter().enumerate() {
            if s.len() != channels * len {
                return Err(Error::Shape(format!(
                    "sample {i} has {} values, expected {channels}x{len}",
                    s.len()
                )));
            }
            data.extend_from_slice(s);
        }
        Ok(Self {
            data,
            shape: (samples.len(), channels, len),
        })
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            shape: self.shape,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            shape: self.shape,
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Sum of elementwise products.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            let axis = if self.shape.0 != other.shape.0 {
                "batch"
            } else if self.shape.1 != other.shape.1 {
                "channel"
            } else {
                "time"
            };
            return Err(Error::Shape(format!(
                "{op}: {axis} axis mismatch, {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

/// Trainable array with gradient and Adam moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step_count: u64,
    dims: Vec<usize>,
}

/// Production parameter type.
pub type ParamTensor = Param<f32>;

impl<T: Real> Param<T> {
    pub fn new(dims: &[usize], value: Vec<T>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if value.len() != n {
            return Err(Error::Shape(format!(
                "parameter of dims {dims:?} needs {n} values, got {}",
                value.len()
            )));
        }
        Ok(Self {
            grad: vec![T::zero(); n],
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            value,
            step_count: 0,
            dims: dims.to_vec(),
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self::new(dims, vec![T::zero(); n]).expect("sizes agree")
    }

    pub fn filled(dims: &[usize], v: T) -> Self {
        let n = dims.iter().product();
        Self::new(dims, vec![v; n]).expect("sizes agree")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    /// Copies values into another precision; optimizer state starts fresh.
    pub fn cast<U: Real>(&self) -> Param<U> {
        Param::new(
            &self.dims,
            self.value.iter().map(|v| U::of(v.as_f64())).collect(),
        )
        .expect("same size")
    }
}
