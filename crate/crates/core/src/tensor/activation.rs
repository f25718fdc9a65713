use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DenseTensor, Mode, Real};
use crate::error::{Error, Result};

pub fn relu<T: Real>(input: &DenseTensor<T>) -> DenseTensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the gradient where the input is strictly positive; the
/// subgradient at exactly zero is taken as 0.
pub fn relu_backward<T: Real>(
    input: &DenseTensor<T>,
    grad_output: &DenseTensor<T>,
) -> Result<DenseTensor<T>> {
    if input.shape() != grad_output.shape() {
        return Err(Error::shape("relu_backward", input.shape(), grad_output.shape()));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    DenseTensor::new(input.shape().to_vec(), data)
}

/// Softmax across the channel axis of a 5-D tensor, stabilized by
/// subtracting the per-voxel maximum.
pub fn softmax_channels<T: Real>(input: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    let [n, c, x, y, z] = input.dims5("softmax_channels")?;
    if c < 2 {
        return Err(Error::InvalidArgument(format!(
            "softmax needs at least 2 channels, got {c}"
        )));
    }
    let vol = x * y * z;
    let mut out = DenseTensor::zeros(input.shape());
    let src = input.data();
    let dst = out.data_mut();
    for b in 0..n {
        let base = b * c * vol;
        for v in 0..vol {
            let mut max = T::neg_infinity();
            for ch in 0..c {
                max = max.max(src[base + ch * vol + v]);
            }
            let mut sum = T::zero();
            for ch in 0..c {
                let e = (src[base + ch * vol + v] - max).exp();
                dst[base + ch * vol + v] = e;
                sum += e;
            }
            for ch in 0..c {
                dst[base + ch * vol + v] = dst[base + ch * vol + v] / sum;
            }
        }
    }
    Ok(out)
}

/// Gradient of [`softmax_channels`] given its output.
pub fn softmax_backward<T: Real>(
    output: &DenseTensor<T>,
    grad_output: &DenseTensor<T>,
) -> Result<DenseTensor<T>> {
    if output.shape() != grad_output.shape() {
        return Err(Error::shape("softmax_backward", output.shape(), grad_output.shape()));
    }
    let [n, c, x, y, z] = output.dims5("softmax_backward")?;
    let vol = x * y * z;
    let mut grad = DenseTensor::zeros(output.shape());
    let (s, g) = (output.data(), grad_output.data());
    let dst = grad.data_mut();
    for b in 0..n {
        let base = b * c * vol;
        for v in 0..vol {
            let mut dot = T::zero();
            for ch in 0..c {
                dot += s[base + ch * vol + v] * g[base + ch * vol + v];
            }
            for ch in 0..c {
                let i = base + ch * vol + v;
                dst[i] = s[i] * (g[i] - dot);
            }
        }
    }
    Ok(grad)
}

/// Stack the channels of `a` before those of `b`.
pub fn concat_channels<T: Real>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    let [na, ca, xa, ya, za] = a.dims5("concat_channels")?;
    let [nb, cb, xb, yb, zb] = b.dims5("concat_channels")?;
    if (na, xa, ya, za) != (nb, xb, yb, zb) {
        return Err(Error::shape("concat_channels", a.shape(), b.shape()));
    }
    let vol = xa * ya * za;
    let mut data = Vec::with_capacity(a.len() + b.len());
    for item in 0..na {
        data.extend_from_slice(&a.data()[item * ca * vol..(item + 1) * ca * vol]);
        data.extend_from_slice(&b.data()[item * cb * vol..(item + 1) * cb * vol]);
    }
    DenseTensor::new(vec![na, ca + cb, xa, ya, za], data)
}

/// Adjoint of [`concat_channels`]: split off the first `first` channels.
pub fn split_channels<T: Real>(
    grad: &DenseTensor<T>,
    first: usize,
) -> Result<(DenseTensor<T>, DenseTensor<T>)> {
    let [n, c, x, y, z] = grad.dims5("split_channels")?;
    if first > c {
        return Err(Error::InvalidArgument(format!(
            "cannot split {first} channels off a {c}-channel tensor"
        )));
    }
    let vol = x * y * z;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for item in 0..n {
        let base = item * c * vol;
        a.extend_from_slice(&grad.data()[base..base + first * vol]);
        b.extend_from_slice(&grad.data()[base + first * vol..base + c * vol]);
    }
    Ok((
        DenseTensor::new(vec![n, first, x, y, z], a)?,
        DenseTensor::new(vec![n, c - first, x, y, z], b)?,
    ))
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Multiplier applied to each element: 0 for dropped values,
/// `1 / (1 - rate)` for survivors. The draw sequence is fixed by `seed`.
fn dropout_mask(len: usize, rate: f64, seed: u64) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(move |_| if rng.random::<f64>() < rate { 0.0 } else { keep })
}

/// Inverted dropout. Inference mode, and a rate of 0, return the input
/// unchanged.
pub fn dropout<T: Real>(
    input: &DenseTensor<T>,
    rate: f64,
    seed: u64,
    mode: Mode,
) -> Result<DenseTensor<T>> {
    check_rate(rate)?;
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(input.clone());
    }
    let data = input
        .data()
        .iter()
        .zip(dropout_mask(input.len(), rate, seed))
        .map(|(&v, m)| v * T::of(m))
        .collect();
    DenseTensor::new(input.shape().to_vec(), data)
}

/// Backward pass of [`dropout`]; regenerates the mask from `seed`.
pub fn dropout_backward<T: Real>(
    grad_output: &DenseTensor<T>,
    rate: f64,
    seed: u64,
    mode: Mode,
) -> Result<DenseTensor<T>> {
    dropout(grad_output, rate, seed, mode)
}
