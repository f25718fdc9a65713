use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Real};

/// Smoothed negative Dice: `-(2 Σ p·g + 1) / (Σ p + Σ g + 1)`.
///
/// `p` holds aorta probabilities and `g` the 0/1 reference, same shape.
/// Returns the loss and its gradient with respect to every `p`. Sums are
/// accumulated in f64 whatever the element type.
pub fn smoothed_dice_loss<T: Real>(
    p: &DenseTensor<T>,
    g: &DenseTensor<T>,
) -> Result<(f64, DenseTensor<T>)> {
    if p.shape() != g.shape() {
        return Err(Error::shape("smoothed_dice_loss", p.shape(), g.shape()));
    }
    let (mut inter, mut sum_p, mut sum_g) = (0.0f64, 0.0f64, 0.0f64);
    for (&pi, &gi) in p.data().iter().zip(g.data()) {
        let (pi, gi) = (pi.as_f64(), gi.as_f64());
        inter += pi * gi;
        sum_p += pi;
        sum_g += gi;
    }
    let num = 2.0 * inter + 1.0;
    let den = sum_p + sum_g + 1.0;
    let loss = -num / den;
    let den2 = den * den;
    let grad = DenseTensor::new(
        p.shape().to_vec(),
        g.data()
            .iter()
            .map(|&gi| T::of(-(2.0 * gi.as_f64() * den - num) / den2))
            .collect(),
    )?;
    Ok((loss, grad))
}
