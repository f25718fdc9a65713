use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Real};
use crate::unet::ParamMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmspropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            rho: 0.9,
            eps: 1e-7,
        }
    }
}

/// Per-parameter running mean of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState<T = f32> {
    pub config: RmspropConfig,
    pub accumulators: ParamMap<T>,
}

impl<T: Real> RmspropState<T> {
    pub fn new(config: RmspropConfig, params: &ParamMap<T>) -> Self {
        Self {
            config,
            accumulators: params
                .iter()
                .map(|(k, v)| (k.clone(), DenseTensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// `v ← ρv + (1−ρ)g²`, then `w ← w − α·g / (√v + ε)`.
    pub fn step(&mut self, params: &mut ParamMap<T>, grads: &ParamMap<T>) -> Result<()> {
        let RmspropConfig {
            learning_rate: lr,
            rho,
            eps,
        } = self.config;
        for (name, w) in params.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::InvalidArgument(format!("no gradient for `{name}`")))?;
            let v = self
                .accumulators
                .get_mut(name)
                .ok_or_else(|| Error::InvalidArgument(format!("no accumulator for `{name}`")))?;
            if g.shape() != w.shape() || v.shape() != w.shape() {
                return Err(Error::shape("rmsprop_step", g.shape(), w.shape()));
            }
            for ((wi, vi), &gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                let gf = gi.as_f64();
                let vf = rho * vi.as_f64() + (1.0 - rho) * gf * gf;
                *vi = T::of(vf);
                *wi = T::of(wi.as_f64() - lr * gf / (vf.sqrt() + eps));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> RmspropState<U> {
        RmspropState {
            config: self.config,
            accumulators: self.accumulators.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> ParamMap<f64> {
        let mut m = ParamMap::new();
        m.insert("w".into(), DenseTensor::new(vec![1], vec![v]).unwrap());
        m
    }

    #[test]
    fn zero_gradient_keeps_weights_and_decays_accumulator() {
        let mut params = scalar(0.7);
        let mut state = RmspropState::new(RmspropConfig::default(), &params);
        state.accumulators["w"].data_mut()[0] = 2.0;
        state.step(&mut params, &scalar(0.0)).unwrap();
        assert_eq!(params["w"].data()[0], 0.7);
        assert!((state.accumulators["w"].data()[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn single_step_by_hand() {
        let mut params = scalar(1.0);
        let mut state = RmspropState::new(RmspropConfig::default(), &params);
        state.step(&mut params, &scalar(2.0)).unwrap();
        assert!((state.accumulators["w"].data()[0] - 0.4).abs() < 1e-15);
        // 1 - 1e-4 * 2 / (sqrt(0.4) + 1e-7)
        let expected = 1.0 - 1e-4 * 2.0 / (0.4f64.sqrt() + 1e-7);
        assert!((params["w"].data()[0] - expected).abs() < 1e-15);
        assert!((params["w"].data()[0] - (1.0 - 3.1623e-4)).abs() < 1e-8);
    }

    #[test]
    fn descends_a_parabola() {
        let mut params = scalar(1.0);
        let mut state = RmspropState::new(RmspropConfig::default(), &params);
        let mut prev = 1.0f64;
        for _ in 0..100 {
            let w = params["w"].data()[0];
            state.step(&mut params, &scalar(2.0 * w)).unwrap();
            let now = params["w"].data()[0].abs();
            assert!(now < prev);
            prev = now;
        }
    }
}
