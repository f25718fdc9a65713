//! Per-slice aorta diameters from a binary mask.
//!
//! Each axial slice is reduced to the outer contour of its largest
//! component, an ellipse is fitted to that contour, and the long axis is
//! scaled by `cos θ`, where `θ` is the local angle between the vessel and the
//! z axis estimated from how the ellipse centres drift between slices.

mod contour;
mod ellipse;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::MaskVolume;

pub use contour::{extract_slice_contour, largest_component, marching_squares, signed_area, MIN_CONTOUR_POINTS};
pub use ellipse::{conic_to_params, fit_ellipse, EllipseParams};

/// Tilt estimates are clamped to this angle.
pub const MAX_TILT_DEG: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMeasurement {
    pub slice: usize,
    pub ellipse: EllipseParams,
    pub raw_diameter_mm: f64,
    pub tilt_theta: f64,
    pub corrected_diameter_mm: f64,
    pub centroid_mm: [f64; 2],
    pub contour_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMeasurement {
    pub slices: Vec<SliceMeasurement>,
    /// Largest corrected diameter, `None` if no slice could be fitted.
    pub max_diameter_mm: Option<f64>,
    pub max_slice: Option<usize>,
}

/// `d·cos θ`.
pub fn corrected_diameter(d_mm: f64, theta: f64) -> Result<f64> {
    if !(d_mm > 0.0) || !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "corrected_diameter needs d > 0 and 0 <= θ < π/2, got d={d_mm}, θ={theta}"
        )));
    }
    Ok(d_mm * theta.cos())
}

/// Local vessel tilt per measured slice from 3-slice centred differences of
/// the centroids (one-sided at the ends of each run of consecutive slices).
/// Slices without a measured neighbour get `θ = 0`. Angles are clamped to
/// [`MAX_TILT_DEG`].
pub fn estimate_tilt(centroids: &[[f64; 2]], slices: &[usize], sz_mm: f64) -> Vec<f64> {
    assert_eq!(centroids.len(), slices.len(), "one centroid per slice");
    let n = slices.len();
    let joined = |a: usize, b: usize| slices[b] == slices[a] + 1;
    (0..n)
        .map(|m| {
            let lo = if m > 0 && joined(m - 1, m) { m - 1 } else { m };
            let hi = if m + 1 < n && joined(m, m + 1) { m + 1 } else { m };
            if lo == hi {
                return 0.0;
            }
            let (p, q) = (centroids[lo], centroids[hi]);
            let drift = (q[0] - p[0]).hypot(q[1] - p[1]);
            let dz = (slices[hi] - slices[lo]) as f64 * sz_mm;
            (drift / dz).atan().min(MAX_TILT_DEG.to_radians())
        })
        .collect()
}

/// Fit every slice of `mask` and take the largest tilt-corrected long axis.
/// Slices without a fittable contour are skipped.
pub fn measure_study(mask: &MaskVolume) -> StudyMeasurement {
    let [nx, ny, nz] = mask.dims();
    let [sx, sy, sz] = mask.spacing_mm();
    let fitted: Vec<(usize, EllipseParams, usize)> = (0..nz)
        .into_par_iter()
        .filter_map(|k| {
            let contour = extract_slice_contour(mask.slice(k), nx, ny, [sx, sy])?;
            let e = fit_ellipse(&contour).ok()?;
            Some((k, e, contour.len()))
        })
        .collect();
    let slices: Vec<usize> = fitted.iter().map(|f| f.0).collect();
    let centroids: Vec<[f64; 2]> = fitted.iter().map(|f| f.1.center).collect();
    let tilts = estimate_tilt(&centroids, &slices, sz);

    let slices: Vec<SliceMeasurement> = fitted
        .into_iter()
        .zip(tilts)
        .map(|((k, e, points), theta)| {
            let raw = 2.0 * e.semi_major;
            SliceMeasurement {
                slice: k,
                ellipse: e,
                raw_diameter_mm: raw,
                tilt_theta: theta,
                corrected_diameter_mm: raw * theta.cos(),
                centroid_mm: e.center,
                contour_points: points,
            }
        })
        .collect();
    let best = slices
        .iter()
        .fold(None, |best: Option<&SliceMeasurement>, s| match best {
            Some(b) if b.corrected_diameter_mm >= s.corrected_diameter_mm => Some(b),
            _ => Some(s),
        });
    StudyMeasurement {
        max_diameter_mm: best.map(|s| s.corrected_diameter_mm),
        max_slice: best.map(|s| s.slice),
        slices,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrected_diameter_cases() {
        assert_eq!(corrected_diameter(40.0, 0.0).unwrap(), 40.0);
        assert!((corrected_diameter(40.0, 60f64.to_radians()).unwrap() - 20.0).abs() < 1e-12);
        assert!((corrected_diameter(50.0, 0.75f64.atan()).unwrap() - 40.0).abs() < 1e-12);
        assert!(corrected_diameter(-1.0, 0.0).is_err());
        assert!(corrected_diameter(1.0, 2.0).is_err());
    }

    #[test]
    fn tilt_from_centroid_drift() {
        let flat = estimate_tilt(&[[1.0, 2.0]; 4], &[0, 1, 2, 3], 2.0);
        assert!(flat.iter().all(|&t| t == 0.0));

        let drift: Vec<[f64; 2]> = (0..5).map(|k| [3.0 * k as f64, 0.0]).collect();
        for t in estimate_tilt(&drift, &[0, 1, 2, 3, 4], 4.0) {
            assert!((t.to_degrees() - 36.869_897_645_844_02).abs() < 1e-9);
        }

        let steep: Vec<[f64; 2]> = (0..3).map(|k| [0.0, 4.0 * k as f64]).collect();
        for t in estimate_tilt(&steep, &[0, 1, 2], 1.0) {
            assert!((t.to_degrees() - 60.0).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_slices_get_zero_tilt() {
        let t = estimate_tilt(&[[0.0, 0.0], [5.0, 0.0], [10.0, 0.0]], &[0, 2, 4], 1.0);
        assert_eq!(t, vec![0.0; 3]);
    }

    #[test]
    fn empty_mask_has_no_maximum() {
        let m = MaskVolume::filled([8, 8, 3], [1.0; 3], 0).unwrap();
        let s = measure_study(&m);
        assert!(s.slices.is_empty());
        assert_eq!(s.max_diameter_mm, None);
    }
}
