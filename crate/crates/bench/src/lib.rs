//! Fixtures shared by the criterion benches.

use aaa_core::phantom::{generate, PhantomSpec, PhantomStudy};
use aaa_core::DenseTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: &[usize], seed: u64) -> DenseTensor<f32> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    DenseTensor::from_fn(shape, |_| r.random::<f32>() * 2.0 - 1.0)
}

/// A noisy tilted tube on the acceptance grid (64×64×32).
pub fn tube_study(radius_mm: f64, tilt_deg: f64) -> PhantomStudy {
    let mut spec = PhantomSpec::tube([64, 64, 32], [1.1, 1.1, 3.0], radius_mm);
    spec.tilt_deg = tilt_deg;
    spec.noise_sigma = 6.0;
    spec.seed = 1;
    generate(&spec).expect("bench phantom fits the grid")
}
