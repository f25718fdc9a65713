//! Per-slice review images as binary PPM (P6): windowed grayscale CT, a red
//! tint over the mask, the fitted ellipse in green and yellow crosses at the
//! ends of its long axis. Row `j` of the image is `y = j`.

use crate::error::{Error, Result};
use crate::geometry::SliceMeasurement;
use crate::volume::{MaskVolume, StudyVolume};

pub const TINT_ALPHA: f64 = 0.4;
pub const OUTLINE_RGB: [u8; 3] = [0, 255, 0];
pub const CROSS_RGB: [u8; 3] = [255, 255, 0];
const CROSS_ARM: i64 = 2;

pub fn render_overlay(
    volume: &StudyVolume,
    mask: &MaskVolume,
    measurement: Option<&SliceMeasurement>,
    slice: usize,
    window: [f32; 2],
) -> Result<Vec<u8>> {
    let [nx, ny, nz] = volume.dims();
    if !volume.same_grid(mask) {
        return Err(Error::InvalidArgument(format!(
            "overlay: volume {:?} and mask {:?} differ in size",
            volume.dims(),
            mask.dims()
        )));
    }
    if slice >= nz {
        return Err(Error::InvalidArgument(format!("overlay: slice {slice} out of range 0..{nz}")));
    }
    if let Some(m) = measurement.filter(|m| m.slice != slice) {
        return Err(Error::InvalidArgument(format!(
            "overlay: measurement is for slice {}, not {slice}",
            m.slice
        )));
    }
    let [lo, hi] = window;
    let mut rgb = vec![0u8; nx * ny * 3];
    let (ct, labels) = (volume.slice(slice), mask.slice(slice));
    for p in 0..nx * ny {
        let g = (((ct[p] - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as f64;
        let px = if labels[p] != 0 {
            let keep = 1.0 - TINT_ALPHA;
            [(keep * g + TINT_ALPHA * 255.0).round() as u8, (keep * g).round() as u8, (keep * g).round() as u8]
        } else {
            [g as u8; 3]
        };
        rgb[3 * p..3 * p + 3].copy_from_slice(&px);
    }

    if let Some(m) = measurement {
        let [sx, sy, _] = volume.spacing_mm();
        let mut paint = |x_mm: f64, y_mm: f64, di: i64, dj: i64, color: [u8; 3]| {
            let (i, j) = ((x_mm / sx).round() as i64 + di, (y_mm / sy).round() as i64 + dj);
            if (0..nx as i64).contains(&i) && (0..ny as i64).contains(&j) {
                let p = 3 * (i as usize + nx * j as usize);
                rgb[p..p + 3].copy_from_slice(&color);
            }
        };
        let e = &m.ellipse;
        let steps = ((8.0 * std::f64::consts::PI * e.semi_major / sx.min(sy)).ceil() as usize).max(64);
        for s in 0..steps {
            let [x, y] = e.point_at(2.0 * std::f64::consts::PI * s as f64 / steps as f64);
            paint(x, y, 0, 0, OUTLINE_RGB);
        }
        for [x, y] in e.long_axis() {
            for d in -CROSS_ARM..=CROSS_ARM {
                paint(x, y, d, 0, CROSS_RGB);
                paint(x, y, 0, d, CROSS_RGB);
            }
        }
    }

    let mut out = format!("P6\n{nx} {ny}\n255\n").into_bytes();
    out.extend_from_slice(&rgb);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::measure_study;

    fn pixels(ppm: &[u8]) -> &[u8] {
        let mut newlines = 0;
        let start = ppm
            .iter()
            .position(|&b| {
                newlines += usize::from(b == b'\n');
                newlines == 3
            })
            .unwrap();
        &ppm[start + 1..]
    }

    #[test]
    fn empty_mask_is_pure_gray() {
        let v = StudyVolume::new([4, 3, 1], [1.0; 3], (0..12).map(|i| i as f32 * 60.0 - 200.0).collect()).unwrap();
        let m = MaskVolume::filled([4, 3, 1], [1.0; 3], 0).unwrap();
        let img = render_overlay(&v, &m, None, 0, [-200.0, 500.0]).unwrap();
        assert!(img.starts_with(b"P6\n4 3\n255\n"));
        let px = pixels(&img);
        assert_eq!(px.len(), 36);
        assert!(px.chunks(3).all(|c| c[0] == c[1] && c[1] == c[2]));
        assert_eq!(&px[..3], &[0, 0, 0]);
        assert!(render_overlay(&v, &m, None, 1, [-200.0, 500.0]).is_err());
    }

    #[test]
    fn outline_hugs_a_circular_mask() {
        let n = 40;
        let mut m = MaskVolume::filled([n, n, 1], [1.0; 3], 0).unwrap();
        for j in 0..n {
            for i in 0..n {
                let r2 = (i as f64 - 19.5).powi(2) + (j as f64 - 19.5).powi(2);
                m.set(i, j, 0, u8::from(r2 <= 12.0 * 12.0));
            }
        }
        let v = StudyVolume::filled([n, n, 1], [1.0; 3], 40.0).unwrap();
        let meas = measure_study(&m);
        let img = render_overlay(&v, &m, Some(&meas.slices[0]), 0, [-200.0, 500.0]).unwrap();
        let px = pixels(&img);
        let boundary = |i: usize, j: usize| {
            let on = m.get(i, j, 0);
            (i > 0 && m.get(i - 1, j, 0) != on)
                || (i + 1 < n && m.get(i + 1, j, 0) != on)
                || (j > 0 && m.get(i, j - 1, 0) != on)
                || (j + 1 < n && m.get(i, j + 1, 0) != on)
        };
        let mut outline = 0;
        for j in 0..n {
            for i in 0..n {
                if px[3 * (i + n * j)..3 * (i + n * j) + 3] == OUTLINE_RGB {
                    outline += 1;
                    let near = (j.saturating_sub(1)..=(j + 1).min(n - 1))
                        .any(|b| (i.saturating_sub(1)..=(i + 1).min(n - 1)).any(|a| boundary(a, b)));
                    assert!(near, "outline pixel ({i},{j}) is more than 1 px from the mask edge");
                }
            }
        }
        assert!(outline > 40);
        let again = render_overlay(&v, &m, Some(&meas.slices[0]), 0, [-200.0, 500.0]).unwrap();
        assert_eq!(img, again);
    }
}
