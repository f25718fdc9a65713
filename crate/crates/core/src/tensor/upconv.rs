//! Transposed convolution with a 2×2×1 kernel and stride 2×2×1.
//!
//! With kernel size equal to stride every output voxel receives exactly one
//! contribution: `out[co, 2i+a, 2j+b, k] = bias[co] + Σ_ci in[ci, i, j, k] ·
//! kernel[ci, co, a, b, 0]`. Each of the four (a, b) phases is one matrix
//! product.

use std::collections::BTreeMap;

use super::gemm::{gemm, View, ViewMut};
use super::{DenseTensor, LayerGrads, Real};
use crate::error::{Error, Result};

fn check<T: Real>(
    op: &'static str,
    input: &DenseTensor<T>,
    kernel: &DenseTensor<T>,
) -> Result<([usize; 5], usize)> {
    let dims = input.dims5(op)?;
    let ks = kernel.shape();
    if ks.len() != 5 || ks[0] != dims[1] || ks[2..] != [2, 2, 1] {
        return Err(Error::shape(op, input.shape(), ks));
    }
    Ok((dims, ks[1]))
}

/// `kernel` is `[c_in, c_out, 2, 2, 1]`; output is `[n, c_out, 2x, 2y, z]`.
pub fn upconv_2x2x1_forward<T: Real>(
    input: &DenseTensor<T>,
    kernel: &DenseTensor<T>,
    bias: &[T],
) -> Result<DenseTensor<T>> {
    let ([n, cin, x, y, z], cout) = check("upconv_2x2x1_forward", input, kernel)?;
    if bias.len() != cout {
        return Err(Error::shape("upconv_2x2x1_forward bias", &[bias.len()], &[cout]));
    }
    let vol = x * y * z;
    let (ox, oy) = (2 * x, 2 * y);
    let mut out = DenseTensor::zeros(&[n, cout, ox, oy, z]);
    let mut phase = vec![T::zero(); cout * vol];
    for b in 0..n {
        for (a, bb) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let tap = a * 2 + bb;
            gemm(
                cout,
                cin,
                vol,
                View::new(kernel.data(), tap, 4, cout * 4),
                View::new(input.data(), b * cin * vol, vol, 1),
                T::zero(),
                ViewMut::new(&mut phase, 0, vol, 1),
            );
            let dst = out.data_mut();
            for co in 0..cout {
                for i in 0..x {
                    for j in 0..y {
                        let s = (co * x + i) * y * z + j * z;
                        let d = (((b * cout + co) * ox + 2 * i + a) * oy + 2 * j + bb) * z;
                        for k in 0..z {
                            dst[d + k] = phase[s + k] + bias[co];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients keyed `"kernel"` and `"bias"`.
pub fn upconv_2x2x1_backward<T: Real>(
    input: &DenseTensor<T>,
    kernel: &DenseTensor<T>,
    grad_output: &DenseTensor<T>,
) -> Result<LayerGrads<T>> {
    let ([n, cin, x, y, z], cout) = check("upconv_2x2x1_backward", input, kernel)?;
    let (ox, oy) = (2 * x, 2 * y);
    if grad_output.shape() != [n, cout, ox, oy, z] {
        return Err(Error::shape(
            "upconv_2x2x1_backward grad_output",
            grad_output.shape(),
            &[n, cout, ox, oy, z],
        ));
    }
    let vol = x * y * z;
    let mut grad_input = DenseTensor::zeros(input.shape());
    let mut grad_kernel = DenseTensor::zeros(kernel.shape());
    let mut grad_bias = vec![T::zero(); cout];
    let mut phase = vec![T::zero(); cout * vol];
    let go = grad_output.data();
    for b in 0..n {
        for (a, bb) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let tap = a * 2 + bb;
            for co in 0..cout {
                for i in 0..x {
                    for j in 0..y {
                        let d = (co * x + i) * y * z + j * z;
                        let s = (((b * cout + co) * ox + 2 * i + a) * oy + 2 * j + bb) * z;
                        phase[d..d + z].copy_from_slice(&go[s..s + z]);
                    }
                }
            }
            for (co, chunk) in phase.chunks(vol).enumerate() {
                grad_bias[co] += chunk.iter().copied().sum::<T>();
            }
            gemm(
                cin,
                cout,
                vol,
                View::new(kernel.data(), tap, cout * 4, 4),
                View::new(&phase, 0, vol, 1),
                T::one(),
                ViewMut::new(&mut grad_input.data_mut()[b * cin * vol..], 0, vol, 1),
            );
            gemm(
                cin,
                vol,
                cout,
                View::new(input.data(), b * cin * vol, vol, 1),
                View::new(&phase, 0, 1, vol),
                T::one(),
                ViewMut::new(grad_kernel.data_mut(), tap, cout * 4, 4),
            );
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
