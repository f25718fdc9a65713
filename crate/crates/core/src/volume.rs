//! Physical image grids shared by every stage of the pipeline.
//!
//! Voxels are stored x-fastest, then y, then z, so each axial slice is one
//! contiguous block. Voxel `(i, j, k)` sits at `(i·sx, j·sy, k·sz)` mm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CtType {
    Contrast,
    Noncontrast,
}

impl CtType {
    pub fn as_str(self) -> &'static str {
        match self {
            CtType::Contrast => "contrast",
            CtType::Noncontrast => "noncontrast",
        }
    }
}

impl std::str::FromStr for CtType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contrast" => Ok(CtType::Contrast),
            "noncontrast" => Ok(CtType::Noncontrast),
            other => Err(Error::InvalidArgument(format!("unknown CT type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    data: Vec<T>,
}

/// CT-like intensities.
pub type StudyVolume = Volume<f32>;
/// Binary segmentation, 1 for aorta.
pub type MaskVolume = Volume<u8>;

impl<T: Copy + Default> Volume<T> {
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3], data: Vec<T>) -> Result<Self> {
        if spacing_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "voxel spacing must be positive, got {spacing_mm:?}"
            )));
        }
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::InvalidArgument(format!(
                "dims {dims:?} need {n} voxels, got {}",
                data.len()
            )));
        }
        Ok(Self {
            dims,
            spacing_mm,
            data,
        })
    }

    pub fn filled(dims: [usize; 3], spacing_mm: [f64; 3], value: T) -> Result<Self> {
        Self::new(dims, spacing_mm, vec![value; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let idx = self.index(i, j, k);
        self.data[idx] = v;
    }

    /// Axial slice `k` as an x-fastest `[x·y]` block.
    pub fn slice(&self, k: usize) -> &[T] {
        let plane = self.dims[0] * self.dims[1];
        &self.data[k * plane..(k + 1) * plane]
    }

    pub fn same_grid<U>(&self, other: &Volume<U>) -> bool {
        self.dims == other.dims
    }
}

impl MaskVolume {
    /// Checked constructor that also rejects values other than 0 and 1.
    pub fn from_binary(dims: [usize; 3], spacing_mm: [f64; 3], data: Vec<u8>) -> Result<Self> {
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidArgument(format!(
                "mask voxels must be 0 or 1, found {bad}"
            )));
        }
        Self::new(dims, spacing_mm, data)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Zero every slice outside `lo..hi` (clamped to the volume).
    pub fn crop_z(&mut self, lo: usize, hi: usize) {
        let plane = self.dims[0] * self.dims[1];
        for k in 0..self.dims[2] {
            if k < lo || k >= hi {
                self.data[k * plane..(k + 1) * plane].fill(0);
            }
        }
    }
}

/// Convert an x-fastest grid into a `[1, 1, x, y, z]` tensor (z-fastest).
pub fn to_tensor<T: Copy + Default, R: Real>(vol: &Volume<T>, f: impl Fn(T) -> R) -> DenseTensor<R> {
    let [x, y, z] = vol.dims;
    DenseTensor::from_fn(&[1, 1, x, y, z], |flat| {
        let k = flat % z;
        let j = (flat / z) % y;
        let i = flat / (y * z);
        f(vol.data[i + x * (j + y * k)])
    })
}

/// Inverse of [`to_tensor`] for a single-channel plane of a 5-D tensor.
pub fn from_tensor_plane<R: Real, T: Copy + Default>(
    t: &DenseTensor<R>,
    item: usize,
    channel: usize,
    spacing_mm: [f64; 3],
    f: impl Fn(R) -> T,
) -> Result<Volume<T>> {
    let [n, c, x, y, z] = t.dims5("from_tensor_plane")?;
    if item >= n || channel >= c {
        return Err(Error::InvalidArgument(format!(
            "plane ({item}, {channel}) out of range for {:?}",
            t.shape()
        )));
    }
    let base = (item * c + channel) * x * y * z;
    let mut data = vec![T::default(); x * y * z];
    for i in 0..x {
        for j in 0..y {
            for k in 0..z {
                data[i + x * (j + y * k)] = f(t.data()[base + (i * y + j) * z + k]);
            }
        }
    }
    Volume::new([x, y, z], spacing_mm, data)
}
