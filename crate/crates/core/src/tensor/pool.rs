use super::{DenseTensor, Real};
use crate::error::{Error, Result};

/// Argmax positions of a max-pool forward pass, enough to route gradients
/// back without the input.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRecord {
    pub input_shape: Vec<usize>,
    /// Flat input index of the winner for every output element.
    pub argmax: Vec<usize>,
}

/// 2×2×1 max pooling: halves x and y, keeps z.
///
/// Ties go to the first element in (dx, dy) scan order.
pub fn maxpool_2x2x1_forward<T: Real>(
    input: &DenseTensor<T>,
) -> Result<(DenseTensor<T>, PoolRecord)> {
    let [n, c, x, y, z] = input.dims5("maxpool_2x2x1_forward")?;
    if x % 2 != 0 || y % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "max pool needs even x and y extents, got {x}×{y}; pad the volume first"
        )));
    }
    let (ox, oy) = (x / 2, y / 2);
    let mut out = DenseTensor::zeros(&[n, c, ox, oy, z]);
    let mut argmax = Vec::with_capacity(out.len());
    let data = input.data();
    let dst = out.data_mut();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * x * y * z;
        for i in 0..ox {
            for j in 0..oy {
                for k in 0..z {
                    let mut best = base + ((2 * i) * y + 2 * j) * z + k;
                    for (dx, dy) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + ((2 * i + dx) * y + 2 * j + dy) * z + k;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    dst[o] = data[best];
                    argmax.push(best);
                    o += 1;
                }
            }
        }
    }
    Ok((
        out,
        PoolRecord {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool_2x2x1_backward<T: Real>(
    record: &PoolRecord,
    grad_output: &DenseTensor<T>,
) -> Result<DenseTensor<T>> {
    if grad_output.len() != record.argmax.len() {
        return Err(Error::shape(
            "maxpool_2x2x1_backward",
            grad_output.shape(),
            &[record.argmax.len()],
        ));
    }
    let mut grad = DenseTensor::zeros(&record.input_shape);
    let g = grad.data_mut();
    for (&idx, &v) in record.argmax.iter().zip(grad_output.data()) {
        g[idx] += v;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_z_extent() {
        let input = DenseTensor::<f32>::zeros(&[1, 1, 4, 4, 7]);
        let (out, _) = maxpool_2x2x1_forward(&input).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2, 7]);
    }

    #[test]
    fn odd_extent_is_rejected() {
        let input = DenseTensor::<f32>::zeros(&[1, 1, 5, 4, 1]);
        assert!(maxpool_2x2x1_forward(&input).is_err());
    }

    #[test]
    fn constant_input_routes_to_one_voxel_per_window() {
        let input = DenseTensor::<f64>::filled(&[1, 2, 4, 2, 3], 3.5);
        let (out, rec) = maxpool_2x2x1_forward(&input).unwrap();
        assert!(out.data().iter().all(|&v| v == 3.5));
        let g = maxpool_2x2x1_backward(&rec, &DenseTensor::filled(out.shape(), 1.0)).unwrap();
        assert_eq!(g.data().iter().filter(|&&v| v == 1.0).count(), out.len());
        assert_eq!(g.data().iter().sum::<f64>(), out.len() as f64);
    }
}
