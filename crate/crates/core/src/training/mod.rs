//! Loss, optimizer, the epoch loop and patient-disjoint fold planning.

mod folds;
mod loss;
mod rmsprop;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use folds::{fold_roles, make_folds, FoldPlan, FoldRoles};
pub use loss::smoothed_dice_loss;
pub use rmsprop::{RmspropConfig, RmspropState};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Mode, Real};
use crate::unet::{self, ParamMap, UNetConfig, WeightStore, AORTA_CHANNEL};
use crate::volume::{to_tensor, MaskVolume, StudyVolume};

/// One study prepared for the network: padded, normalized input and the
/// matching 0/1 target, both `[1, 1, x, y, z]`.
#[derive(Debug, Clone)]
pub struct Sample<T = f32> {
    pub id: String,
    pub input: DenseTensor<T>,
    pub target: DenseTensor<T>,
}

impl<T: Real> Sample<T> {
    pub fn from_study(config: &UNetConfig, id: &str, volume: &StudyVolume, truth: &MaskVolume) -> Result<Self> {
        if !volume.same_grid(truth) {
            return Err(Error::InvalidArgument(format!(
                "study {id}: volume {:?} and mask {:?} differ in size",
                volume.dims(),
                truth.dims()
            )));
        }
        let (input, _) = unet::prepare_input(config, volume)?;
        let (padded, _) = unet::pad_to_grid(truth, config.levels)?;
        Ok(Self {
            id: id.to_string(),
            input,
            target: to_tensor(&padded, |v| if v != 0 { T::one() } else { T::zero() }),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub optimizer: RmspropConfig,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T = f32> {
    /// Snapshot from the epoch with the lowest validation loss.
    pub best: WeightStore<T>,
    /// 1-based epoch of `best`, `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
}

/// Index of the smallest loss; ties go to the earlier entry.
pub fn select_best_epoch(val_losses: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &l) in val_losses.iter().enumerate() {
        if best.is_none_or(|b| l < val_losses[b]) {
            best = Some(i);
        }
    }
    best
}

/// splitmix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loss of one sample and its parameter gradients, in training mode. Also
/// returns the moved batch-norm statistics.
pub fn loss_and_gradients<T: Real>(
    weights: &WeightStore<T>,
    config: &UNetConfig,
    sample: &Sample<T>,
    seed: u64,
) -> Result<(f64, ParamMap<T>, indexmap::IndexMap<String, crate::tensor::BatchNormState<T>>)> {
    let pass = unet::forward_pass(weights, config, &sample.input, Mode::Train, seed, true)?;
    let aorta = pass.prob.channel(AORTA_CHANNEL)?;
    let (loss, grad_p) = smoothed_dice_loss(&aorta, &sample.target)?;
    let [n, c, x, y, z] = pass.prob.dims5("loss_and_gradients")?;
    let vol = x * y * z;
    let mut grad_prob = DenseTensor::zeros(&[n, c, x, y, z]);
    for b in 0..n {
        let dst = (b * c + AORTA_CHANNEL) * vol;
        grad_prob.data_mut()[dst..dst + vol].copy_from_slice(&grad_p.data()[b * vol..(b + 1) * vol]);
    }
    let grads = unet::backward(weights, config, &pass, &grad_prob)?;
    Ok((loss, grads, pass.batch_norm))
}

/// Loss of one sample in inference mode.
pub fn evaluate_loss<T: Real>(weights: &WeightStore<T>, config: &UNetConfig, sample: &Sample<T>) -> Result<f64> {
    let prob = unet::forward(weights, config, &sample.input, Mode::Infer, 0)?;
    Ok(smoothed_dice_loss(&prob.channel(AORTA_CHANNEL)?, &sample.target)?.0)
}

/// RMSprop training with batch size 1, keeping the weights from the epoch
/// with the lowest mean validation loss.
///
/// The training order of each epoch is a seeded shuffle and each step's
/// dropout stream is derived from `(seed, epoch, step)`, so equal inputs give
/// bit-identical results. `on_epoch` sees each history row as it is
/// produced.
pub fn train(
    config: &UNetConfig,
    mut weights: WeightStore<f32>,
    train_set: &[Sample<f32>],
    val_set: &[Sample<f32>],
    options: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<f32>> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "training needs non-empty train and validation sets (got {} and {})",
            train_set.len(),
            val_set.len()
        )));
    }
    weights.validate(config)?;
    let mut optimizer = match weights.optimizer.take() {
        Some(mut state) => {
            state.config = options.optimizer;
            state
        }
        None => RmspropState::new(options.optimizer, &weights.params),
    };

    let mut best = WeightStore {
        optimizer: Some(optimizer.clone()),
        ..weights.clone()
    };
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut history = Vec::with_capacity(options.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=options.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(options.seed, epoch as u64, 0)));
        let mut train_total = 0.0;
        for (step, &i) in order.iter().enumerate() {
            let seed = mix_seed(options.seed, epoch as u64, step as u64 + 1);
            let (loss, grads, bn) = loss_and_gradients(&weights, config, &train_set[i], seed)?;
            if !loss.is_finite() || grads.values().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite training loss or gradient at epoch {epoch} (study {})",
                    train_set[i].id
                )));
            }
            optimizer.step(&mut weights.params, &grads)?;
            weights.batch_norm = bn;
            train_total += loss;
        }
        let mut val_total = 0.0;
        for sample in val_set {
            val_total += evaluate_loss(&weights, config, sample)?;
        }
        let record = EpochRecord {
            epoch,
            train_loss: train_total / train_set.len() as f64,
            val_loss: val_total / val_set.len() as f64,
        };
        if !record.val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        if record.val_loss < best_loss {
            best_loss = record.val_loss;
            best_epoch = Some(epoch);
            best = WeightStore {
                optimizer: Some(optimizer.clone()),
                ..weights.clone()
            };
        }
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_epoch_is_argmin() {
        assert_eq!(select_best_epoch(&[-0.2, -0.6, -0.4]), Some(1));
        assert_eq!(select_best_epoch(&[-0.5, -0.5]), Some(0));
        assert_eq!(select_best_epoch(&[]), None);
    }

    #[test]
    fn mixed_seeds_differ() {
        assert_ne!(mix_seed(1, 1, 0), mix_seed(1, 2, 0));
        assert_ne!(mix_seed(1, 1, 1), mix_seed(1, 1, 2));
        assert_eq!(mix_seed(5, 3, 4), mix_seed(5, 3, 4));
    }
}
