//! Same-padded 3×3×3 convolution and pointwise 1×1×1 convolution.
//!
//! The 3×3×3 path copies each batch item into a zero-bordered buffer of
//! extent `(x+2)(y+2)(z+2)`. In that flattened buffer a kernel tap is a
//! constant index shift, so each of the 27 taps becomes one strided matrix
//! product over a contiguous run of positions. Positions that land on the
//! border are computed and then dropped.

use std::collections::BTreeMap;

use super::gemm::{gemm, View, ViewMut};
use super::{DenseTensor, LayerGrads, Real};
use crate::error::{Error, Result};

const TAPS: usize = 27;

struct PaddedGrid {
    dims: [usize; 3],
    /// Strides of the padded grid along x and y (z stride is 1).
    sx: usize,
    sy: usize,
    len: usize,
    /// First interior position.
    q0: usize,
    /// Number of positions from the first to the last interior one.
    span: usize,
}

impl PaddedGrid {
    fn new(x: usize, y: usize, z: usize) -> Self {
        let (yp, zp) = (y + 2, z + 2);
        let sx = yp * zp;
        let sy = zp;
        let q0 = sx + sy + 1;
        let last = x * sx + y * sy + z;
        Self {
            dims: [x, y, z],
            sx,
            sy,
            len: (x + 2) * sx,
            q0,
            span: last + 1 - q0,
        }
    }

    /// Start of the shifted input run for kernel tap `tap` (kx, ky, kz
    /// row-major), relative to the output run starting at `q0`.
    fn tap_start(&self, tap: usize) -> usize {
        let (kx, ky, kz) = (tap / 9, (tap / 3) % 3, tap % 3);
        self.q0 + kx * self.sx + ky * self.sy + kz - (self.sx + self.sy + 1)
    }

    /// Copy `channels` dense `[x, y, z]` blocks into the interior of a
    /// padded buffer. Border cells are left untouched.
    fn scatter<T: Real>(&self, src: &[T], channels: usize, dst: &mut [T]) {
        let [x, y, z] = self.dims;
        for c in 0..channels {
            for i in 0..x {
                for j in 0..y {
                    let s = ((c * x + i) * y + j) * z;
                    let d = c * self.len + (i + 1) * self.sx + (j + 1) * self.sy + 1;
                    dst[d..d + z].copy_from_slice(&src[s..s + z]);
                }
            }
        }
    }

    fn gather<T: Real>(&self, src: &[T], channels: usize, dst: &mut [T]) {
        let [x, y, z] = self.dims;
        for c in 0..channels {
            for i in 0..x {
                for j in 0..y {
                    let s = c * self.len + (i + 1) * self.sx + (j + 1) * self.sy + 1;
                    let d = ((c * x + i) * y + j) * z;
                    dst[d..d + z].copy_from_slice(&src[s..s + z]);
                }
            }
        }
    }
}

fn check_conv_shapes<T: Real>(
    op: &'static str,
    input: &DenseTensor<T>,
    kernel: &DenseTensor<T>,
    k: usize,
) -> Result<([usize; 5], usize)> {
    let dims = input.dims5(op)?;
    let ks = kernel.shape();
    if ks.len() != 5 || ks[1] != dims[1] || ks[2..] != [k, k, k] {
        return Err(Error::shape(op, input.shape(), ks));
    }
    Ok((dims, ks[0]))
}

/// Zero-padded 3×3×3 convolution (cross-correlation) with stride 1.
///
/// `kernel` is `[c_out, c_in, 3, 3, 3]`; the output keeps the spatial
/// extent of `input`.
pub fn conv3d_forward<T: Real>(
    input: &DenseTensor<T>,
    kernel: &DenseTensor<T>,
    bias: &[T],
) -> Result<DenseTensor<T>> {
    let ([n, cin, x, y, z], cout) = check_conv_shapes("conv3d_forward", input, kernel, 3)?;
    if bias.len() != cout {
        return Err(Error::shape("conv3d_forward bias", &[bias.len()], &[cout]));
    }
    let grid = PaddedGrid::new(x, y, z);
    let vol = x * y * z;
    let mut out = DenseTensor::zeros(&[n, cout, x, y, z]);
    let mut padded = vec![T::zero(); cin * grid.len];
    let mut acc = vec![T::zero(); cout * grid.len];
    for b in 0..n {
        grid.scatter(&input.data()[b * cin * vol..(b + 1) * cin * vol], cin, &mut padded);
        acc.iter_mut().for_each(|v| *v = T::zero());
        for tap in 0..TAPS {
            gemm(
                cout,
                cin,
                grid.span,
                View::new(kernel.data(), tap, cin * TAPS, TAPS),
                View::new(&padded, grid.tap_start(tap), grid.len, 1),
                T::one(),
                ViewMut::new(&mut acc, grid.q0, grid.len, 1),
            );
        }
        let dst = &mut out.data_mut()[b * cout * vol..(b + 1) * cout * vol];
        grid.gather(&acc, cout, dst);
        for (co, chunk) in dst.chunks_mut(vol).enumerate() {
            chunk.iter_mut().for_each(|v| *v += bias[co]);
        }
    }
    Ok(out)
}

/// Adjoint of [`conv3d_forward`]. Parameter gradients are keyed
/// `"kernel"` and `"bias"`.
pub fn conv3d_backward<T: Real>(
    input: &DenseTensor<T>,
    kernel: &DenseTensor<T>,
    grad_output: &DenseTensor<T>,
) -> Result<LayerGrads<T>> {
    let ([n, cin, x, y, z], cout) = check_conv_shapes("conv3d_backward", input, kernel, 3)?;
    if grad_output.shape() != [n, cout, x, y, z] {
        return Err(Error::shape(
            "conv3d_backward grad_output",
            grad_output.shape(),
            &[n, cout, x, y, z],
        ));
    }
    let grid = PaddedGrid::new(x, y, z);
    let vol = x * y * z;
    let mut grad_input = DenseTensor::zeros(input.shape());
    let mut grad_kernel = DenseTensor::zeros(kernel.shape());
    let mut grad_bias = vec![T::zero(); cout];

    let mut padded_in = vec![T::zero(); cin * grid.len];
    let mut padded_go = vec![T::zero(); cout * grid.len];
    let mut padded_gi = vec![T::zero(); cin * grid.len];
    for b in 0..n {
        let go = &grad_output.data()[b * cout * vol..(b + 1) * cout * vol];
        grid.scatter(&input.data()[b * cin * vol..(b + 1) * cin * vol], cin, &mut padded_in);
        grid.scatter(go, cout, &mut padded_go);
        padded_gi.iter_mut().for_each(|v| *v = T::zero());
        for tap in 0..TAPS {
            let start = grid.tap_start(tap);
            // input gradient: kernelᵀ · grad_out, shifted back by the tap
            gemm(
                cin,
                cout,
                grid.span,
                View::new(kernel.data(), tap, TAPS, cin * TAPS),
                View::new(&padded_go, grid.q0, grid.len, 1),
                T::one(),
                ViewMut::new(&mut padded_gi, start, grid.len, 1),
            );
            // kernel gradient: grad_out · shifted_inputᵀ
            gemm(
                cout,
                grid.span,
                cin,
                View::new(&padded_go, grid.q0, grid.len, 1),
                View::new(&padded_in, start, 1, grid.len),
                T::one(),
                ViewMut::new(grad_kernel.data_mut(), tap, cin * TAPS, TAPS),
            );
        }
        grid.gather(
            &padded_gi,
            cin,
            &mut grad_input.data_mut()[b * cin * vol..(b + 1) * cin * vol],
        );
        for (co, chunk) in go.chunks(vol).enumerate() {
            grad_bias[co] += chunk.iter().copied().sum::<T>();
        }
    }
    let mut grad_params = BTreeMap::new();
    grad_params.insert("kernel".to_string(), grad_kernel);
    grad_params.insert("bias".to_string(), DenseTensor::new(vec![cout], grad_bias)?);
    Ok(LayerGrads {
        grad_input,
        grad_params,
    })
}

/// Pointwise convolution with a `[c_out, c_in, 1, 1, 1]` kernel.
pub fn conv1x1_forward<T: Real>(
    input: &DenseTensor<T>,
    kernel: &DenseTensor<T>,
    bias: &[T],
) -> Result<DenseTensor<T>> {
    let ([n, cin, x, y, z], cout) = check_conv_shapes("conv1x1_forward", input, kernel, 1)?;
    if bias.len() != cout {
        return Err(Error::shape("conv1x1_forward bias", &[bias.len()], &[cout]));
    }
    let vol = x * y * z;
    let mut out = DenseTensor::zeros(&[n, cout, x, y, z]);
    for b in 0..n {
        let dst = &mut out.data_mut()[b * cout * vol..(b + 1) * cout * vol];
        for (co, chunk) in dst.chunks_mut(vol).enumerate() {
            chunk.iter_mut().for_each(|v| *v = bias[co]);
        }
        gemm(
            cout,
            cin,
            vol,
            View::new(kernel.data(), 0, cin, 1),
            View::new(input.data(), b * cin * vol, vol, 1),
            T::one(),
            ViewMut::new(dst, 0, vol, 1),
        );
    }
    Ok(out)
}

pub fn conv1x1_backward<T: Real>(
    input: &DenseTensor<T>,
    kernel: &DenseTensor<T>,
    grad_output: &DenseTensor<T>,
) -> Result<LayerGrads<T>> {
    let ([n, cin, x, y, z], cout) = check_conv_shapes("conv1x1_backward", input, kernel, 1)?;
    if grad_output.shape() != [n, cout, x, y, z] {
        return Err(Error::shape(
            "conv1x1_backward grad_output",
            grad_output.shape(),
            &[n, cout, x, y, z],
        ));
    }
    let vol = x * y * z;
    let mut grad_input = DenseTensor::zeros(input.shape());
    let mut grad_kernel = DenseTensor::zeros(kernel.shape());
    let mut grad_bias = vec![T::zero(); cout];
    for b in 0..n {
        let go = &grad_output.data()[b * cout * vol..(b + 1) * cout * vol];
        gemm(
            cin,
            cout,
            vol,
            View::new(kernel.data(), 0, 1, cin),
            View::new(go, 0, vol, 1),
            T::zero(),
            ViewMut::new(&mut grad_input.data_mut()[b * cin * vol..], 0, vol, 1),
        );
        gemm(
            cout,
            vol,
            cin,
            View::new(go, 0, vol, 1),
            View::new(input.data(), b * cin * vol, 1, vol),
            T::one(),
            ViewMut::new(grad_kernel.data_mut(), 0, cin, 1),
        );
        for (co, chunk) in go.chunks(vol).enumerate() {
            grad_bias[co] += chunk.iter().copied().sum::<T>();
        }
    }
    let mut grad_params = BTreeMap::new();
    grad_params.insert("kernel".to_string(), grad_kernel);
    grad_params.insert("bias".to_string(), DenseTensor::new(vec![cout], grad_bias)?);
    Ok(LayerGrads {
        grad_input,
        grad_params,
    })
}
