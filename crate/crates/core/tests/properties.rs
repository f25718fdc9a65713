//! Invariants checked over random inputs.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use aaa_core::detect::{classify_aaa, confusion_metrics, dice_score, StudyReport};
use aaa_core::geometry::{fit_ellipse, measure_study};
use aaa_core::phantom::{analytic_max_diameter, generate, Aneurysm, PhantomSpec};
use aaa_core::training::make_folds;
use aaa_core::unet::{pad_to_grid, unpad};
use aaa_core::{CtType, MaskVolume, Volume};
use proptest::prelude::*;

fn mask_strategy() -> impl Strategy<Value = (MaskVolume, MaskVolume)> {
    (1usize..6, 1usize..6, 1usize..4).prop_flat_map(|(x, y, z)| {
        let n = x * y * z;
        (prop::collection::vec(0u8..2, n), prop::collection::vec(0u8..2, n)).prop_map(move |(a, b)| {
            (
                MaskVolume::new([x, y, z], [1.0; 3], a).unwrap(),
                MaskVolume::new([x, y, z], [1.0; 3], b).unwrap(),
            )
        })
    })
}

fn ellipse_points(c: [f64; 2], a: f64, b: f64, phi: f64, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|s| {
            let t = 2.0 * PI * s as f64 / n as f64;
            let (u, v) = (a * t.cos(), b * t.sin());
            [c[0] + u * phi.cos() - v * phi.sin(), c[1] + u * phi.sin() + v * phi.cos()]
        })
        .collect()
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dice_is_symmetric_and_bounded((a, b) in mask_strategy()) {
        let ab = dice_score(&a, &b).unwrap();
        prop_assert_eq!(ab, dice_score(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(dice_score(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn folds_keep_patients_together(
        patients in prop::collection::vec(1usize..4, 5..30),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let studies: Vec<(String, String)> = patients
            .iter()
            .enumerate()
            .flat_map(|(p, &n)| (0..n).map(move |s| (format!("p{p}s{s}"), format!("p{p}"))))
            .collect();
        let plan = make_folds(&studies, k, seed).unwrap();
        let mut home = BTreeMap::new();
        for (s, p) in &studies {
            let f = plan.fold_of(s).unwrap();
            prop_assert_eq!(*home.entry(p.clone()).or_insert(f), f);
        }
        prop_assert_eq!(plan.sizes().iter().sum::<usize>(), studies.len());
        prop_assert_eq!(make_folds(&studies, k, seed).unwrap(), plan);
    }

    #[test]
    fn ellipse_fit_ignores_point_order(
        a in 4.0f64..40.0, ratio in 0.3f64..1.0, phi in 0.0f64..PI,
        cx in -50.0f64..50.0, cy in -50.0f64..50.0, seed in any::<u64>(),
    ) {
        let mut pts = ellipse_points([cx, cy], a, a * ratio, phi, 32);
        let e = fit_ellipse(&pts).unwrap();
        use rand::{seq::SliceRandom, SeedableRng};
        pts.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let f = fit_ellipse(&pts).unwrap();
        prop_assert!((e.semi_major - f.semi_major).abs() < 1e-9 * a);
        prop_assert!((e.semi_minor - f.semi_minor).abs() < 1e-9 * a);
    }

    #[test]
    fn ellipse_fit_follows_rigid_motion(
        a in 4.0f64..40.0, ratio in 0.3f64..0.9, phi in 0.0f64..PI,
        rot in 0.0f64..(2.0 * PI), tx in -80.0f64..80.0, ty in -80.0f64..80.0,
    ) {
        let pts = ellipse_points([0.0, 0.0], a, a * ratio, phi, 40);
        let e = fit_ellipse(&pts).unwrap();
        let moved: Vec<[f64; 2]> = pts
            .iter()
            .map(|&[x, y]| [x * rot.cos() - y * rot.sin() + tx, x * rot.sin() + y * rot.cos() + ty])
            .collect();
        let f = fit_ellipse(&moved).unwrap();
        prop_assert!((e.semi_major - f.semi_major).abs() < 1e-9 * a);
        prop_assert!((e.semi_minor - f.semi_minor).abs() < 1e-9 * a);
        prop_assert!((f.center[0] - tx).abs() < 1e-9 * a && (f.center[1] - ty).abs() < 1e-9 * a);
        prop_assert!(angle_gap(f.orientation, e.orientation + rot) < 1e-9);
    }

    #[test]
    fn unpad_inverts_pad(x in 1usize..20, y in 1usize..20, z in 1usize..4, levels in 0usize..4) {
        let v = Volume::new([x, y, z], [1.0, 2.0, 3.0], (0..x * y * z).map(|i| i as u32 + 1).collect()).unwrap();
        let (p, rec) = pad_to_grid(&v, levels).unwrap();
        let [px, py, pz] = p.dims();
        prop_assert!(px % (1 << levels) == 0 && py % (1 << levels) == 0 && pz == z);
        prop_assert!(px - x < 1 << levels && py - y < 1 << levels);
        prop_assert_eq!(p.data().iter().filter(|&&v| v != 0).count(), x * y * z);
        prop_assert_eq!(unpad(&p, &rec).unwrap(), v);
    }

    #[test]
    fn classification_is_monotone(d1 in 0.0f64..100.0, d2 in 0.0f64..100.0) {
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        let (a, b) = (classify_aaa(Some(lo)).unwrap(), classify_aaa(Some(hi)).unwrap());
        prop_assert!(!a.positive || b.positive);
    }

    #[test]
    fn confusion_ignores_order_and_ids(
        rows in prop::collection::vec((0.0f64..60.0, 0.0f64..60.0), 1..40),
        seed in any::<u64>(),
    ) {
        let reports: Vec<StudyReport> = rows
            .iter()
            .enumerate()
            .map(|(i, &(p, r))| StudyReport::new(&format!("s{i}"), CtType::Contrast, Some(p)).unwrap().with_reference(r))
            .collect();
        let base = confusion_metrics(&reports).unwrap();
        let mut shuffled: Vec<StudyReport> = reports
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| { r.study_id = format!("renamed{}", 1000 - i); r })
            .collect();
        use rand::{seq::SliceRandom, SeedableRng};
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(confusion_metrics(&shuffled).unwrap(), base);
    }
}

fn tube_spec(r: f64, tilt: f64, azimuth: f64, sz: f64, bulge: f64) -> PhantomSpec {
    let mut spec = PhantomSpec::tube([64, 64, 24], [1.1, 1.1, sz], r);
    spec.tilt_deg = tilt;
    spec.azimuth_deg = azimuth;
    if bulge > 0.0 {
        spec.aneurysm = Some(Aneurysm {
            center_mm: 12.0 * sz,
            amplitude_mm: bulge,
            width_mm: 20.0,
        });
    }
    spec
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn truth_masks_measure_to_the_analytic_diameter(
        r in 6.0f64..14.0, tilt in 0.0f64..25.0, azimuth in 0.0f64..360.0,
        sz in 1.0f64..6.0, bulge in 0.0f64..8.0,
    ) {
        let spec = tube_spec(r, tilt, azimuth, sz, bulge);
        let study = generate(&spec);
        prop_assume!(study.is_ok());
        let study = study.unwrap();
        let d = measure_study(&study.truth_mask).max_diameter_mm.unwrap();
        let truth = analytic_max_diameter(&spec);
        let tol = 1.1 + 0.5 * sz * tilt.to_radians().tan();
        prop_assert!((d - truth).abs() <= tol, "measured {d} vs analytic {truth}, tol {tol}");
    }

    #[test]
    fn truth_mask_volume_matches_the_tube(
        r in 6.0f64..14.0, tilt in 0.0f64..25.0, azimuth in 0.0f64..360.0, sz in 1.0f64..6.0,
    ) {
        let spec = tube_spec(r, tilt, azimuth, sz, 0.0);
        let study = generate(&spec);
        prop_assume!(study.is_ok());
        let study = study.unwrap();
        // a slab of height sz cuts an ellipse of area πr²/cosθ from the tube
        let [sx, sy, _] = spec.spacing_mm;
        let voxels = study.truth_mask.count() as f64 * sx * sy * sz;
        let expected = PI * r * r / tilt.to_radians().cos() * sz * 24.0;
        prop_assert!((voxels / expected - 1.0).abs() < 0.05, "{voxels} vs {expected}");
    }
}
