//! On-disk formats: volumes, weights and JSON documents.
//!
//! A volume is a JSON header next to a raw little-endian payload with the
//! same stem (`ct.json` + `ct.raw`), voxels x-fastest, then y, then z. Weights
//! are a JSON manifest of named, shaped entries with byte offsets into a
//! payload of little-endian `f32` (`weights.json` + `weights.bin`). Writers are
//! deterministic, so write → read → write reproduces the same bytes.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BatchNormState, DenseTensor};
use crate::training::{RmspropConfig, RmspropState};
use crate::unet::{UNetConfig, WeightStore};
use crate::volume::{CtType, MaskVolume, Volume};

pub const FORMAT_VERSION: u32 = 1;

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

fn check_version(path: &Path, version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported format_version {version} (expected {FORMAT_VERSION})"),
        ));
    }
    Ok(())
}

/// Payload file next to `header`, named after its stem.
fn sibling(header: &Path, ext: &str) -> Result<(PathBuf, String)> {
    let stem = header
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::format(header, "header path has no usable file name"))?;
    let name = format!("{stem}.{ext}");
    Ok((header.with_file_name(&name), name))
}

/// Element types a volume file can hold.
pub trait Voxel: Copy + Default {
    const DTYPE: &'static str;
    const UNITS: &'static str;
    const SIZE: usize;
    fn put(self, out: &mut Vec<u8>);
    fn get(bytes: &[u8]) -> Self;
}

impl Voxel for f32 {
    const DTYPE: &'static str = "f32le";
    const UNITS: &'static str = "CT-like intensity units";
    const SIZE: usize = 4;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Voxel for u8 {
    const DTYPE: &'static str = "u8";
    const UNITS: &'static str = "label: 0 background, 1 aorta";
    const SIZE: usize = 1;
    fn put(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn get(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub format_version: u32,
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: String,
    pub intensity_units: String,
    /// Payload file name, relative to the header.
    pub payload: String,
    #[serde(flatten)]
    pub meta: VolumeMeta,
}

/// Optional study metadata carried in a volume header, so that files
/// produced by one stage identify themselves to the next.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ct_type: Option<CtType>,
}

impl VolumeMeta {
    pub fn study(study_id: &str, ct_type: CtType) -> Self {
        Self {
            study_id: Some(study_id.to_string()),
            ct_type: Some(ct_type),
        }
    }
}

/// Write `vol` as `header` (JSON) plus a `.raw` payload beside it.
pub fn write_volume<T: Voxel>(header: &Path, vol: &Volume<T>, meta: &VolumeMeta) -> Result<()> {
    let (raw_path, raw_name) = sibling(header, "raw")?;
    let mut payload = Vec::with_capacity(vol.data().len() * T::SIZE);
    for &v in vol.data() {
        v.put(&mut payload);
    }
    write_bytes(&raw_path, &payload)?;
    write_json(
        header,
        &VolumeHeader {
            format_version: FORMAT_VERSION,
            dims: vol.dims(),
            spacing_mm: vol.spacing_mm(),
            dtype: T::DTYPE.into(),
            intensity_units: T::UNITS.into(),
            payload: raw_name,
            meta: meta.clone(),
        },
    )
}

pub fn read_volume<T: Voxel>(header_path: &Path) -> Result<(Volume<T>, VolumeHeader)> {
    let header: VolumeHeader = read_json(header_path)?;
    check_version(header_path, header.format_version)?;
    if header.dtype != T::DTYPE {
        return Err(Error::format(
            header_path,
            format!("dtype `{}` where `{}` was expected", header.dtype, T::DTYPE),
        ));
    }
    let raw_path = header_path.with_file_name(&header.payload);
    let bytes = read_bytes(&raw_path)?;
    let n: usize = header.dims.iter().product();
    if bytes.len() != n * T::SIZE {
        return Err(Error::format(
            &raw_path,
            format!("payload has {} bytes, dims {:?} need {}", bytes.len(), header.dims, n * T::SIZE),
        ));
    }
    let data = bytes.chunks_exact(T::SIZE).map(T::get).collect();
    let vol = Volume::new(header.dims, header.spacing_mm, data).map_err(|e| Error::format(header_path, e.to_string()))?;
    Ok((vol, header))
}

/// [`read_volume`] for masks, rejecting labels other than 0 and 1.
pub fn read_mask(header_path: &Path) -> Result<(MaskVolume, VolumeHeader)> {
    let (vol, header) = read_volume::<u8>(header_path)?;
    let mask = MaskVolume::from_binary(vol.dims(), vol.spacing_mm(), vol.into_data())
        .map_err(|e| Error::format(header_path, e.to_string()))?;
    Ok((mask, header))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Param,
    BnMean,
    BnVar,
    RmspropV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub name: String,
    pub kind: EntryKind,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub format_version: u32,
    pub dtype: String,
    pub payload: String,
    pub config: UNetConfig,
    pub optimizer: Option<RmspropConfig>,
    pub entries: Vec<WeightEntry>,
}

pub fn save_weights(path: &Path, weights: &WeightStore<f32>, config: &UNetConfig) -> Result<()> {
    weights.validate(config)?;
    let (bin_path, bin_name) = sibling(path, "bin")?;
    let mut payload = Vec::new();
    let mut entries = Vec::new();
    let mut push = |name: &str, kind: EntryKind, shape: Vec<usize>, data: &[f32]| {
        entries.push(WeightEntry {
            name: name.to_string(),
            kind,
            shape,
            offset: payload.len(),
        });
        for v in data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (name, t) in &weights.params {
        push(name, EntryKind::Param, t.shape().to_vec(), t.data());
    }
    for (name, s) in &weights.batch_norm {
        push(name, EntryKind::BnMean, vec![s.running_mean.len()], &s.running_mean);
        push(name, EntryKind::BnVar, vec![s.running_var.len()], &s.running_var);
    }
    if let Some(opt) = &weights.optimizer {
        for (name, t) in &opt.accumulators {
            push(name, EntryKind::RmspropV, t.shape().to_vec(), t.data());
        }
    }
    write_bytes(&bin_path, &payload)?;
    write_json(
        path,
        &WeightManifest {
            format_version: FORMAT_VERSION,
            dtype: "f32le".into(),
            payload: bin_name,
            config: config.clone(),
            optimizer: weights.optimizer.as_ref().map(|o| o.config),
            entries,
        },
    )
}

pub fn load_weights(path: &Path) -> Result<(WeightStore<f32>, UNetConfig)> {
    let manifest: WeightManifest = read_json(path)?;
    check_version(path, manifest.format_version)?;
    if manifest.dtype != "f32le" {
        return Err(Error::format(path, format!("unsupported weight dtype `{}`", manifest.dtype)));
    }
    let bin_path = path.with_file_name(&manifest.payload);
    let bytes = read_bytes(&bin_path)?;
    let mut params = IndexMap::new();
    let mut means: IndexMap<String, Vec<f32>> = IndexMap::new();
    let mut vars: IndexMap<String, Vec<f32>> = IndexMap::new();
    let mut accumulators = IndexMap::new();
    let mut cursor = 0usize;
    for e in &manifest.entries {
        if e.offset != cursor {
            return Err(Error::format(
                path,
                format!("entry `{}` starts at byte {} but the previous one ended at {cursor}", e.name, e.offset),
            ));
        }
        let n: usize = e.shape.iter().product();
        let end = cursor + 4 * n;
        let chunk = bytes
            .get(cursor..end)
            .ok_or_else(|| Error::format(&bin_path, format!("entry `{}` runs past the payload", e.name)))?;
        let data: Vec<f32> = chunk.chunks_exact(4).map(f32::get).collect();
        cursor = end;
        let fresh = match e.kind {
            EntryKind::Param => params.insert(e.name.clone(), DenseTensor::new(e.shape.clone(), data)?).is_none(),
            EntryKind::BnMean => means.insert(e.name.clone(), data).is_none(),
            EntryKind::BnVar => vars.insert(e.name.clone(), data).is_none(),
            EntryKind::RmspropV => accumulators
                .insert(e.name.clone(), DenseTensor::new(e.shape.clone(), data)?)
                .is_none(),
        };
        if !fresh {
            return Err(Error::format(path, format!("duplicate {:?} entry `{}`", e.kind, e.name)));
        }
    }
    if cursor != bytes.len() {
        return Err(Error::format(
            &bin_path,
            format!("payload has {} bytes, entries cover {cursor}", bytes.len()),
        ));
    }
    let mut batch_norm = IndexMap::new();
    for (name, running_mean) in means {
        let running_var = vars
            .swap_remove(&name)
            .ok_or_else(|| Error::format(path, format!("batch norm `{name}` has a mean but no variance")))?;
        batch_norm.insert(
            name,
            BatchNormState {
                running_mean,
                running_var,
            },
        );
    }
    if let Some(name) = vars.keys().next() {
        return Err(Error::format(path, format!("batch norm `{name}` has a variance but no mean")));
    }
    let optimizer = match manifest.optimizer {
        Some(config) => Some(RmspropState { config, accumulators }),
        None if accumulators.is_empty() => None,
        None => return Err(Error::format(path, "optimizer accumulators without optimizer config")),
    };
    let store = WeightStore {
        params,
        batch_norm,
        optimizer,
    };
    store
        .validate(&manifest.config)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((store, manifest.config))
}
