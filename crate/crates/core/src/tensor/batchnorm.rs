use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DenseTensor, LayerGrads, Mode, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchNormConfig {
    pub eps: f64,
    /// Weight kept on the old running statistic at each update.
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            momentum: 0.9,
        }
    }
}

/// Running per-channel statistics used in inference mode.
///
/// An empty state (no channels) is "uninitialized": inference refuses it,
/// and the first training batch seeds it with the batch statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchNormState<T = f32> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> BatchNormState<T> {
    /// Populated state with mean 0 and variance 1.
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn is_initialized(&self) -> bool {
        !self.running_mean.is_empty()
    }
}

/// What the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T = f32> {
    mode: Mode,
    normalized: DenseTensor<T>,
    inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormOutput<T = f32> {
    pub output: DenseTensor<T>,
    pub state: BatchNormState<T>,
    pub cache: BatchNormCache<T>,
}

/// Per-channel normalization over the batch and spatial axes.
///
/// Training mode uses the batch statistics (biased variance) and returns a
/// state whose running statistics moved towards them by
/// `1 - config.momentum`. Inference mode uses the running statistics and
/// returns the state unchanged.
pub fn batchnorm_forward<T: Real>(
    input: &DenseTensor<T>,
    gamma: &[T],
    beta: &[T],
    state: &BatchNormState<T>,
    mode: Mode,
    config: &BatchNormConfig,
) -> Result<BatchNormOutput<T>> {
    let [n, c, x, y, z] = input.dims5("batchnorm_forward")?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::shape(
            "batchnorm_forward gamma/beta",
            &[gamma.len(), beta.len()],
            &[c, c],
        ));
    }
    if state.is_initialized() && (state.running_mean.len() != c || state.running_var.len() != c)
    {
        return Err(Error::shape(
            "batchnorm_forward state",
            &[state.running_mean.len()],
            &[c],
        ));
    }
    let vol = x * y * z;
    let count = (n * vol) as f64;
    let eps = config.eps;

    let (mean, var, new_state) = match mode {
        Mode::Infer => {
            if !state.is_initialized() {
                return Err(Error::InvalidArgument(
                    "batch norm inference needs populated running statistics".into(),
                ));
            }
            let mean: Vec<f64> = state.running_mean.iter().map(|v| v.as_f64()).collect();
            let var: Vec<f64> = state.running_var.iter().map(|v| v.as_f64()).collect();
            (mean, var, state.clone())
        }
        Mode::Train => {
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..n {
                    let start = (b * c + ch) * vol;
                    s += input.data()[start..start + vol]
                        .iter()
                        .map(|v| v.as_f64())
                        .sum::<f64>();
                }
                let m = s / count;
                let mut sq = 0.0;
                for b in 0..n {
                    let start = (b * c + ch) * vol;
                    sq += input.data()[start..start + vol]
                        .iter()
                        .map(|v| (v.as_f64() - m).powi(2))
                        .sum::<f64>();
                }
                mean[ch] = m;
                var[ch] = sq / count;
            }
            let new_state = if state.is_initialized() {
                let mom = config.momentum;
                BatchNormState {
                    running_mean: (0..c)
                        .map(|ch| T::of(mom * state.running_mean[ch].as_f64() + (1.0 - mom) * mean[ch]))
                        .collect(),
                    running_var: (0..c)
                        .map(|ch| T::of(mom * state.running_var[ch].as_f64() + (1.0 - mom) * var[ch]))
                        .collect(),
                }
            } else {
                BatchNormState {
                    running_mean: mean.iter().map(|&v| T::of(v)).collect(),
                    running_var: var.iter().map(|&v| T::of(v)).collect(),
                }
            };
            (mean, var, new_state)
        }
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::of(1.0 / (v + eps).sqrt())).collect();
    let mut normalized = DenseTensor::zeros(input.shape());
    let mut output = DenseTensor::zeros(input.shape());
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * vol;
            let m = T::of(mean[ch]);
            let src = &input.data()[start..start + vol];
            let xhat = &mut normalized.data_mut()[start..start + vol];
            for (h, &v) in xhat.iter_mut().zip(src) {
                *h = (v - m) * inv_std[ch];
            }
            let out = &mut output.data_mut()[start..start + vol];
            for (o, &h) in out.iter_mut().zip(&normalized.data()[start..start + vol]) {
                *o = gamma[ch] * h + beta[ch];
            }
        }
    }
    Ok(BatchNormOutput {
        output,
        state: new_state,
        cache: BatchNormCache {
            mode,
            normalized,
            inv_std,
        },
    })
}

/// Gradients keyed `"gamma"` and `"beta"`. In training mode the input
/// gradient accounts for the dependence of the batch statistics on the
/// input.
pub fn batchnorm_backward<T: Real>(
    cache: &BatchNormCache<T>,
    gamma: &[T],
    grad_output: &DenseTensor<T>,
) -> Result<LayerGrads<T>> {
    if grad_output.shape() != cache.normalized.shape() {
        return Err(Error::shape(
            "batchnorm_backward",
            grad_output.shape(),
            cache.normalized.shape(),
        ));
    }
    let [n, c, x, y, z] = grad_output.dims5("batchnorm_backward")?;
    let vol = x * y * z;
    let count = (n * vol) as f64;
    let mut grad_input = DenseTensor::zeros(grad_output.shape());
    let mut grad_gamma = vec![T::zero(); c];
    let mut grad_beta = vec![T::zero(); c];
    for ch in 0..c {
        let mut sum_dy = 0.0f64;
        let mut sum_dy_xhat = 0.0f64;
        for b in 0..n {
            let start = (b * c + ch) * vol;
            let dy = &grad_output.data()[start..start + vol];
            let xh = &cache.normalized.data()[start..start + vol];
            for (&g, &h) in dy.iter().zip(xh) {
                sum_dy += g.as_f64();
                sum_dy_xhat += g.as_f64() * h.as_f64();
            }
        }
        grad_gamma[ch] = T::of(sum_dy_xhat);
        grad_beta[ch] = T::of(sum_dy);
        let scale = gamma[ch] * cache.inv_std[ch];
        let mean_dy = T::of(sum_dy / count);
        let mean_dy_xhat = T::of(sum_dy_xhat / count);
        for b in 0..n {
            let start = (b * c + ch) * vol;
            let dy = &grad_output.data()[start..start + vol];
            let xh = &cache.normalized.data()[start..start + vol];
            let gi = &mut grad_input.data_mut()[start..start + vol];
            match cache.mode {
                Mode::Train => {
                    for ((o, &g), &h) in gi.iter_mut().zip(dy).zip(xh) {
                        *o = scale * (g - mean_dy - h * mean_dy_xhat);
                    }
                }
                Mode::Infer => {
                    for (o, &g) in gi.iter_mut().zip(dy) {
                        *o = scale * g;
                    }
                }
            }
        }
    }
    let mut grad_params = BTreeMap::new();
    grad_params.insert("gamma".to_string(), DenseTensor::new(vec![c], grad_gamma)?);
    grad_params.insert("beta".to_string(), DenseTensor::new(vec![c], grad_beta)?);
    Ok(LayerGrads {
        grad_input,
        grad_params,
    })
}
