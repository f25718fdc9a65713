//! Dense N-dimensional arrays and the differentiable layers of the network.
//!
//! Activations are 5-D `[batch, channel, x, y, z]` in row-major order, so
//! `z` is the fastest-varying index. Every layer is a pure function: the
//! forward pass returns whatever the backward pass needs, and nothing is
//! cached behind the caller's back.
//!
//! Layers are generic over [`Real`]. The production path runs in `f32`;
//! `f64` exists so finite-difference gradient checks have enough headroom.

mod activation;
mod batchnorm;
mod conv;
mod gemm;
mod pool;
mod upconv;

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

pub use activation::{
    concat_channels, dropout, dropout_backward, relu, relu_backward, softmax_backward,
    softmax_channels, split_channels,
};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormConfig, BatchNormOutput,
    BatchNormState,
};
pub use conv::{conv1x1_backward, conv1x1_forward, conv3d_backward, conv3d_forward};
pub use pool::{maxpool_2x2x1_backward, maxpool_2x2x1_forward, PoolRecord};
pub use upconv::{upconv_2x2x1_backward, upconv_2x2x1_forward};

/// Floating-point element type of a [`DenseTensor`].
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` over raw strided storage.
    ///
    /// # Safety
    /// The strides and extents must describe memory inside the allocations
    /// behind the pointers, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Training or inference behaviour for layers that differ between the two
/// (batch normalization, dropout).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// Contiguous row-major array with an explicit shape.
#[derive(Clone, PartialEq)]
pub struct DenseTensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> DenseTensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Shape as `[n, c, x, y, z]`, or an error naming `op` if the tensor
    /// is not 5-D.
    pub fn dims5(&self, op: &'static str) -> Result<[usize; 5]> {
        match self.shape[..] {
            [n, c, x, y, z] => Ok([n, c, x, y, z]),
            _ => Err(Error::InvalidArgument(format!(
                "{op} expects a 5-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> DenseTensor<U> {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Sum of element-wise products, accumulated in `f64`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::shape("dot", &self.shape, &other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add", &self.shape, &other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Copy of channel `c` of a 5-D tensor as `[n, 1, x, y, z]`.
    pub fn channel(&self, c: usize) -> Result<Self> {
        let [n, ch, x, y, z] = self.dims5("channel")?;
        if c >= ch {
            return Err(Error::InvalidArgument(format!(
                "channel {c} out of range for {ch} channels"
            )));
        }
        let plane = x * y * z;
        let mut data = Vec::with_capacity(n * plane);
        for b in 0..n {
            let start = (b * ch + c) * plane;
            data.extend_from_slice(&self.data[start..start + plane]);
        }
        Ok(Self {
            shape: vec![n, 1, x, y, z],
            data,
        })
    }
}

impl<T: fmt::Debug> fmt::Debug for DenseTensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseTensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

/// Gradients returned by a layer's backward pass.
#[derive(Debug, Clone)]
pub struct LayerGrads<T = f32> {
    pub grad_input: DenseTensor<T>,
    pub grad_params: BTreeMap<String, DenseTensor<T>>,
}

impl<T: Real> LayerGrads<T> {
    pub fn param(&self, name: &str) -> &DenseTensor<T> {
        &self.grad_params[name]
    }
}
