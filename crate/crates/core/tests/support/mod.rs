//! Test-only oracles: central finite differences and seeded random data.
#![allow(dead_code)]

use aaa_core::DenseTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> DenseTensor<f64> {
    DenseTensor::from_fn(shape, |_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
}

/// Values bounded away from zero, so kink-based layers stay differentiable
/// under an `FD_EPS` perturbation.
pub fn random_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseTensor<f64> {
    DenseTensor::from_fn(shape, |_| {
        let mag = 0.05 + rng.random::<f64>();
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    })
}

/// Central differences of a scalar function with respect to every element
/// of `x`.
pub fn numeric_grad(x: &DenseTensor<f64>, f: impl Fn(&DenseTensor<f64>) -> f64) -> Vec<f64> {
    numeric_grad_eps(x, FD_EPS, f)
}

pub fn numeric_grad_eps(
    x: &DenseTensor<f64>,
    eps: f64,
    f: impl Fn(&DenseTensor<f64>) -> f64,
) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + eps;
            let up = f(&probe);
            probe.data_mut()[i] = orig - eps;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Largest element-wise relative error. Gradients whose magnitudes are both
/// below `floor` are compared absolutely against `floor`.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Relative error of whole gradient vectors, ‖a − n‖ / max(‖a‖, ‖n‖).
pub fn vector_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum();
    let na: f64 = analytic.iter().map(|a| a * a).sum();
    let nn: f64 = numeric.iter().map(|a| a * a).sum();
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-300)
}
