//! Synthetic studies with closed-form ground truth.
//!
//! A phantom is a straight tube through the volume centre, tilted from the z
//! axis, with an optional Gaussian (fusiform) bulge in its radius. Because the
//! tube is straight, its true diameter is known exactly at every point, which
//! is what makes these studies usable as an oracle for the whole pipeline.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detect::AAA_THRESHOLD_MM;
use crate::error::{Error, Result};
use crate::volume::{CtType, MaskVolume, StudyVolume};

pub const BACKGROUND_HU: f32 = 40.0;
pub const CONTRAST_LUMEN_HU: f32 = 300.0;
pub const NONCONTRAST_LUMEN_HU: f32 = 60.0;

/// Radius profile `r(t) = r0 + A·exp(−(t − t0)² / 2σ²)`, with `t` the signed
/// distance along the axis from the volume centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aneurysm {
    pub center_mm: f64,
    pub amplitude_mm: f64,
    pub width_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub study_id: String,
    pub patient_id: String,
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub base_radius_mm: f64,
    pub aneurysm: Option<Aneurysm>,
    /// Angle between the tube axis and the z axis.
    pub tilt_deg: f64,
    /// In-plane direction of the tilt, measured from +x towards +y.
    pub azimuth_deg: f64,
    pub ct_type: CtType,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Untilted, noiseless contrast tube in a `dims` grid.
    pub fn tube(dims: [usize; 3], spacing_mm: [f64; 3], base_radius_mm: f64) -> Self {
        Self {
            study_id: "phantom".into(),
            patient_id: "phantom".into(),
            dims,
            spacing_mm,
            base_radius_mm,
            aneurysm: None,
            tilt_deg: 0.0,
            azimuth_deg: 0.0,
            ct_type: CtType::Contrast,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn radius_at(&self, t_mm: f64) -> f64 {
        match self.aneurysm {
            Some(a) => {
                let d = t_mm - a.center_mm;
                self.base_radius_mm + a.amplitude_mm * (-d * d / (2.0 * a.width_mm * a.width_mm)).exp()
            }
            None => self.base_radius_mm,
        }
    }

    /// Centre of the volume in mm; the axis passes through it.
    pub fn center_mm(&self) -> [f64; 3] {
        std::array::from_fn(|a| (self.dims[a] as f64 - 1.0) * self.spacing_mm[a] / 2.0)
    }

    /// Unit direction of the tube axis.
    pub fn axis(&self) -> [f64; 3] {
        let (t, p) = (self.tilt_deg.to_radians(), self.azimuth_deg.to_radians());
        [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
    }

    /// Axial coordinate `t` at which the axis crosses slice `k`.
    pub fn axis_t_at_slice(&self, k: f64) -> f64 {
        (k * self.spacing_mm[2] - self.center_mm()[2]) / self.tilt_deg.to_radians().cos()
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(format!("phantom {}: {what}", self.study_id)));
        if self.dims.contains(&0) {
            return bad(format!("dims {:?} must be positive", self.dims));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad(format!("spacing {:?} must be positive", self.spacing_mm));
        }
        if !(self.base_radius_mm > 0.0) {
            return bad(format!("base radius {} must be positive", self.base_radius_mm));
        }
        if let Some(a) = self.aneurysm {
            if !(a.width_mm > 0.0) || !a.amplitude_mm.is_finite() || !a.center_mm.is_finite() {
                return bad(format!("invalid aneurysm {a:?}"));
            }
            if self.base_radius_mm + a.amplitude_mm.min(0.0) <= 0.0 {
                return bad("radius profile must stay positive".into());
            }
        }
        if !(0.0..90.0).contains(&self.tilt_deg) {
            return bad(format!("tilt {} must lie in [0, 90)", self.tilt_deg));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be non-negative", self.noise_sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomStudy {
    pub volume: StudyVolume,
    pub truth_mask: MaskVolume,
    pub analytic_max_diameter_mm: f64,
    pub reference_aaa: bool,
    pub spec: PhantomSpec,
}

/// `2·max r(t)`. The diameter is perpendicular to the axis, so tilt does not
/// enter.
pub fn analytic_max_diameter(spec: &PhantomSpec) -> f64 {
    let bulge = spec.aneurysm.map_or(0.0, |a| a.amplitude_mm.max(0.0));
    2.0 * (spec.base_radius_mm + bulge)
}

/// Whether the centre of voxel `(i, j, k)` lies inside the tube.
pub fn inside(spec: &PhantomSpec, i: usize, j: usize, k: usize) -> bool {
    let c = spec.center_mm();
    let u = spec.axis();
    let p = [i as f64, j as f64, k as f64];
    let d: [f64; 3] = std::array::from_fn(|a| p[a] * spec.spacing_mm[a] - c[a]);
    let t = d[0] * u[0] + d[1] * u[1] + d[2] * u[2];
    let r2 = (0..3).map(|a| (d[a] - t * u[a]).powi(2)).sum::<f64>();
    r2 <= spec.radius_at(t).powi(2)
}

/// Voxelize the spec and add noise. Fails if the tube touches the in-plane
/// border of any slice.
pub fn generate(spec: &PhantomSpec) -> Result<PhantomStudy> {
    spec.validate()?;
    let [x, y, z] = spec.dims;
    let mut mask = MaskVolume::filled(spec.dims, spec.spacing_mm, 0)?;
    for k in 0..z {
        for j in 0..y {
            for i in 0..x {
                if inside(spec, i, j, k) {
                    if i == 0 || j == 0 || i + 1 == x || j + 1 == y {
                        return Err(Error::InvalidArgument(format!(
                            "phantom {}: tube leaves the volume at slice {k}",
                            spec.study_id
                        )));
                    }
                    mask.set(i, j, k, 1);
                }
            }
        }
    }

    let lumen = match spec.ct_type {
        CtType::Contrast => CONTRAST_LUMEN_HU,
        CtType::Noncontrast => NONCONTRAST_LUMEN_HU,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let data = mask
        .data()
        .iter()
        .map(|&m| {
            let base = if m != 0 { lumen } else { BACKGROUND_HU };
            base + noise.sample(&mut rng) as f32
        })
        .collect();
    let volume = StudyVolume::new(spec.dims, spec.spacing_mm, data)?;
    let d = analytic_max_diameter(spec);
    Ok(PhantomStudy {
        volume,
        truth_mask: mask,
        analytic_max_diameter_mm: d,
        reference_aaa: d > AAA_THRESHOLD_MM,
        spec: spec.clone(),
    })
}

/// Distributions for [`corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n: usize,
    pub positive_fraction: f64,
    pub dims: [usize; 3],
    /// In-plane spacing range (sx = sy), mm.
    pub inplane_spacing_mm: (f64, f64),
    /// Slice spacing range, mm. Studies are spread evenly over it.
    pub slice_spacing_mm: (f64, f64),
    pub max_tilt_deg: f64,
    pub contrast_fraction: f64,
    /// Diameter ranges for negative and positive studies, mm.
    pub negative_diameter_mm: (f64, f64),
    pub positive_diameter_mm: (f64, f64),
    pub noise_sigma: f64,
    /// Every `pair_every`-th patient owns two studies (0 disables pairing).
    pub pair_every: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n: 50,
            positive_fraction: 0.5,
            dims: [64, 64, 32],
            inplane_spacing_mm: (1.0, 1.3),
            slice_spacing_mm: (2.0, 10.0),
            max_tilt_deg: 30.0,
            contrast_fraction: 0.5,
            negative_diameter_mm: (16.0, 27.0),
            positive_diameter_mm: (34.0, 48.0),
            noise_sigma: 6.0,
            pair_every: 4,
            seed: 0,
        }
    }
}

fn half_fov(dims: [usize; 3], spacing: [f64; 3]) -> f64 {
    ((dims[0] - 1) as f64 * spacing[0]).min((dims[1] - 1) as f64 * spacing[1]) / 2.0
}

/// Largest tilt (degrees, up to `cap`) at which a tube of radius `r_max`
/// through the centre stays 1.5 voxels clear of the in-plane border.
fn fitting_tilt(dims: [usize; 3], spacing: [f64; 3], r_max: f64, cap: f64) -> f64 {
    let half_fov = half_fov(dims, spacing) - 1.5 * spacing[0].max(spacing[1]);
    let half_z = (dims[2] - 1) as f64 * spacing[2] / 2.0;
    let fits = |deg: f64| {
        let t = f64::to_radians(deg);
        t.tan() * half_z + r_max / t.cos() <= half_fov
    };
    if !fits(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, cap);
    if fits(hi) {
        return hi;
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Reproducible phantom corpus. Exactly `round(n · positive_fraction)`
/// studies are positive; slice spacings are spread evenly over the requested
/// range (both ends included); some patients own two studies.
pub fn corpus(cs: &CorpusSpec) -> Result<Vec<PhantomStudy>> {
    if cs.n == 0 {
        return Err(Error::InvalidArgument("corpus needs n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&cs.positive_fraction) || !(0.0..=1.0).contains(&cs.contrast_fraction) {
        return Err(Error::InvalidArgument("fractions must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cs.seed);
    let n = cs.n;
    let positives = (n as f64 * cs.positive_fraction).round() as usize;
    let contrasts = (n as f64 * cs.contrast_fraction).round() as usize;
    let mut label_order: Vec<usize> = (0..n).collect();
    label_order.shuffle(&mut rng);
    let mut contrast_order: Vec<usize> = (0..n).collect();
    contrast_order.shuffle(&mut rng);
    let mut spacing_order: Vec<usize> = (0..n).collect();
    spacing_order.shuffle(&mut rng);

    let (mut patient, mut owned) = (0usize, 1usize);
    let mut studies = Vec::with_capacity(n);
    for i in 0..n {
        let positive = label_order[i] < positives;
        let ct_type = if contrast_order[i] < contrasts {
            CtType::Contrast
        } else {
            CtType::Noncontrast
        };
        let (zlo, zhi) = cs.slice_spacing_mm;
        let sz = if n == 1 {
            zlo
        } else {
            zlo + (zhi - zlo) * spacing_order[i] as f64 / (n - 1) as f64
        };
        let sxy = rng.random_range(cs.inplane_spacing_mm.0..=cs.inplane_spacing_mm.1);
        let spacing = [sxy, sxy, sz];

        let (dlo, dhi) = if positive {
            cs.positive_diameter_mm
        } else {
            cs.negative_diameter_mm
        };
        let diameter = rng.random_range(dlo..=dhi);
        let (base, amplitude) = if positive {
            let base = rng.random_range(8.0..=12.0f64).min(diameter / 2.0 - 1.0);
            (base, diameter / 2.0 - base)
        } else if rng.random_bool(0.5) {
            let amp = rng.random_range(0.5..=3.0f64).min(diameter / 4.0);
            (diameter / 2.0 - amp, amp)
        } else {
            (diameter / 2.0, 0.0)
        };

        let cap = fitting_tilt(cs.dims, spacing, diameter / 2.0, cs.max_tilt_deg);
        let tilt_deg = rng.random_range(0.0..=cap);
        let azimuth_deg = rng.random_range(0.0..360.0);
        let z = cs.dims[2];
        let k0 = rng.random_range(z / 4..=(3 * z / 4).max(z / 4));
        let width = rng.random_range(12.0..=30.0f64);

        if i > 0 {
            let pair = cs.pair_every > 0 && owned == 1 && patient % cs.pair_every == cs.pair_every - 1;
            if pair {
                owned = 2;
            } else {
                patient += 1;
                owned = 1;
            }
        }

        let mut spec = PhantomSpec {
            study_id: format!("s{i:03}"),
            patient_id: format!("p{patient:03}"),
            dims: cs.dims,
            spacing_mm: spacing,
            base_radius_mm: base,
            aneurysm: None,
            tilt_deg,
            azimuth_deg,
            ct_type,
            noise_sigma: cs.noise_sigma,
            seed: rng.random(),
        };
        if amplitude > 0.0 {
            spec.aneurysm = Some(Aneurysm {
                // snapped so the bulge peak sits on a slice
                center_mm: spec.axis_t_at_slice(k0 as f64),
                amplitude_mm: amplitude,
                width_mm: width,
            });
        }
        studies.push(generate(&spec)?);
    }
    Ok(studies)
}
