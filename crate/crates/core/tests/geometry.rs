//! Diameter measurement on analytic cylinders.

use aaa_core::geometry::{corrected_diameter, estimate_tilt, measure_study, MAX_TILT_DEG};
use aaa_core::phantom::{generate, PhantomSpec};
use aaa_core::MaskVolume;

fn cylinder(r: f64, tilt_deg: f64, azimuth_deg: f64, spacing: [f64; 3]) -> MaskVolume {
    let mut spec = PhantomSpec::tube([96, 96, 16], spacing, r);
    spec.tilt_deg = tilt_deg;
    spec.azimuth_deg = azimuth_deg;
    generate(&spec).unwrap().truth_mask
}

#[test]
fn vertical_cylinder_measures_its_diameter() {
    let spacing = [0.8, 0.8, 3.0];
    let m = measure_study(&cylinder(15.0, 0.0, 0.0, spacing));
    assert_eq!(m.slices.len(), 16);
    for s in &m.slices {
        assert!((s.corrected_diameter_mm - 30.0).abs() <= 0.5 * spacing[0], "slice {}: {}", s.slice, s.corrected_diameter_mm);
        assert_eq!(s.tilt_theta, 0.0);
    }
    assert!((m.max_diameter_mm.unwrap() - 30.0).abs() <= 0.5 * spacing[0]);
}

#[test]
fn tilted_cylinder_is_corrected() {
    let r = 10.0;
    let m = measure_study(&cylinder(r, 30.0, 40.0, [0.7, 0.7, 2.0]));
    let interior = &m.slices[1..m.slices.len() - 1];
    for s in interior {
        let raw_expected = 2.0 * r / 30f64.to_radians().cos();
        assert!((s.raw_diameter_mm / raw_expected - 1.0).abs() < 0.05, "raw {}", s.raw_diameter_mm);
        assert!((s.corrected_diameter_mm / (2.0 * r) - 1.0).abs() < 0.05, "corrected {}", s.corrected_diameter_mm);
        assert!((s.tilt_theta.to_degrees() - 30.0).abs() < 2.0, "tilt {}", s.tilt_theta.to_degrees());
    }
}

#[test]
fn correction_beats_raw_across_tilts() {
    let r = 10.0;
    for tilt in [12.0, 20.0, 28.0, 36.0, 44.0] {
        let m = measure_study(&cylinder(r, tilt, 110.0, [0.7, 0.7, 2.0]));
        let s = &m.slices[m.slices.len() / 2];
        assert!(
            (s.corrected_diameter_mm - 2.0 * r).abs() < (s.raw_diameter_mm - 2.0 * r).abs(),
            "tilt {tilt}: raw {} corrected {}",
            s.raw_diameter_mm,
            s.corrected_diameter_mm
        );
    }
}

#[test]
fn empty_and_single_slice_masks() {
    let empty = MaskVolume::filled([8, 8, 3], [1.0; 3], 0).unwrap();
    let m = measure_study(&empty);
    assert!(m.slices.is_empty() && m.max_diameter_mm.is_none() && m.max_slice.is_none());

    // a lone slice has no neighbours to estimate tilt from
    let mut one = cylinder(8.0, 0.0, 0.0, [1.0, 1.0, 5.0]);
    for k in 0..16 {
        if k != 7 {
            for j in 0..96 {
                for i in 0..96 {
                    one.set(i, j, k, 0);
                }
            }
        }
    }
    let m = measure_study(&one);
    assert_eq!(m.slices.len(), 1);
    assert_eq!(m.slices[0].tilt_theta, 0.0);
    assert_eq!(m.max_slice, Some(7));
}

#[test]
fn tilt_examples() {
    let flat = estimate_tilt(&[[1.0, 2.0]; 4], &[0, 1, 2, 3], 5.0);
    assert_eq!(flat, vec![0.0; 4]);

    let drift: Vec<[f64; 2]> = (0..5).map(|k| [3.0 * k as f64, 0.0]).collect();
    for t in estimate_tilt(&drift, &[0, 1, 2, 3, 4], 4.0) {
        assert!((t - (3.0f64 / 4.0).atan()).abs() < 1e-12);
    }

    let steep: Vec<[f64; 2]> = (0..3).map(|k| [0.0, 10.0 * k as f64]).collect();
    for t in estimate_tilt(&steep, &[0, 1, 2], 1.0) {
        assert_eq!(t, MAX_TILT_DEG.to_radians());
    }

    // a gap splits the runs; the isolated slice stays untilted
    let t = estimate_tilt(&[[0.0, 0.0], [2.0, 0.0], [9.0, 9.0]], &[0, 1, 5], 2.0);
    assert!((t[0] - 45f64.to_radians()).abs() < 1e-12 && (t[1] - 45f64.to_radians()).abs() < 1e-12);
    assert_eq!(t[2], 0.0);
}

#[test]
fn correction_is_monotone_in_tilt() {
    assert_eq!(corrected_diameter(30.0, 0.0).unwrap(), 30.0);
    let mut prev = f64::INFINITY;
    for deg in 0..60 {
        let d = corrected_diameter(30.0, (deg as f64).to_radians()).unwrap();
        assert!(d < prev);
        prev = d;
    }
}
