//! File formats, the corpus manifest, per-study evaluation and the
//! cross-validation driver behind the `aaa` command line tool.

mod files;
mod overlay;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use files::{
    load_weights, read_json, read_mask, read_volume, save_weights, write_json, write_volume, EntryKind, VolumeHeader,
    VolumeMeta, Voxel, WeightEntry, WeightManifest, FORMAT_VERSION,
};
pub use overlay::{render_overlay, CROSS_RGB, OUTLINE_RGB, TINT_ALPHA};
pub use report::{detection_csv, history_csv, reports_csv, stratified_csv, summary_csv};

use crate::detect::{aggregate_report, dice_score, Grouping, StudyReport, SummaryRow};
use crate::error::{Error, Result};
use crate::geometry::{measure_study, StudyMeasurement};
use crate::phantom::{CorpusSpec, PhantomSpec, PhantomStudy};
use crate::training::{self, make_folds, mix_seed, EpochRecord, FoldPlan, FoldRoles, RmspropConfig, Sample, TrainOptions};
use crate::unet::{self, UNetConfig, WeightStore};
use crate::volume::{CtType, MaskVolume, StudyVolume};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce a training or cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub format_version: u32,
    pub network: UNetConfig,
    pub optimizer: RmspropConfig,
    pub epochs: usize,
    pub seed: u64,
    pub folds: usize,
    /// Rotation `n` used by a single `train` run.
    pub rotation: usize,
    /// Slices outside `lo..hi` are cleared from predicted masks before
    /// measurement.
    pub z_crop: Option<[usize; 2]>,
    pub corpus_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            network: UNetConfig::default(),
            optimizer: RmspropConfig::default(),
            epochs: 60,
            seed: 0,
            folds: 5,
            rotation: 0,
            z_crop: None,
            corpus_dir: None,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            optimizer: self.optimizer,
            epochs: self.epochs,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub study_id: String,
    pub patient_id: String,
    pub ct_type: CtType,
    /// Header file names, relative to the corpus directory.
    pub volume: String,
    pub mask: Option<String>,
    pub reference_diameter_mm: Option<f64>,
    pub reference_aaa: Option<bool>,
    pub spec: Option<PhantomSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub generator: Option<CorpusSpec>,
    pub studies: Vec<CorpusEntry>,
}

impl CorpusManifest {
    pub fn entry(&self, study_id: &str) -> Option<&CorpusEntry> {
        self.studies.iter().find(|e| e.study_id == study_id)
    }
}

/// Write each phantom as `<id>_ct` and `<id>_mask` volumes plus
/// `manifest.json`.
pub fn write_corpus(dir: &Path, generator: Option<&CorpusSpec>, studies: &[PhantomStudy]) -> Result<CorpusManifest> {
    let mut entries = Vec::with_capacity(studies.len());
    for s in studies {
        let id = &s.spec.study_id;
        let (ct, mask) = (format!("{id}_ct.json"), format!("{id}_mask.json"));
        let meta = VolumeMeta::study(id, s.spec.ct_type);
        write_volume(&dir.join(&ct), &s.volume, &meta)?;
        write_volume(&dir.join(&mask), &s.truth_mask, &meta)?;
        entries.push(CorpusEntry {
            study_id: id.clone(),
            patient_id: s.spec.patient_id.clone(),
            ct_type: s.spec.ct_type,
            volume: ct,
            mask: Some(mask),
            reference_diameter_mm: Some(s.analytic_max_diameter_mm),
            reference_aaa: Some(s.reference_aaa),
            spec: Some(s.spec.clone()),
        });
    }
    let manifest = CorpusManifest {
        format_version: FORMAT_VERSION,
        generator: generator.cloned(),
        studies: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest> {
    let path = dir.join(MANIFEST_FILE);
    let m: CorpusManifest = read_json(&path)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::format(&path, format!("unsupported format_version {}", m.format_version)));
    }
    Ok(m)
}

/// A study with its truth loaded into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedStudy {
    pub study_id: String,
    pub patient_id: String,
    pub ct_type: CtType,
    pub volume: StudyVolume,
    pub truth_mask: Option<MaskVolume>,
    pub reference_diameter_mm: Option<f64>,
}

impl From<&PhantomStudy> for LoadedStudy {
    fn from(s: &PhantomStudy) -> Self {
        Self {
            study_id: s.spec.study_id.clone(),
            patient_id: s.spec.patient_id.clone(),
            ct_type: s.spec.ct_type,
            volume: s.volume.clone(),
            truth_mask: Some(s.truth_mask.clone()),
            reference_diameter_mm: Some(s.analytic_max_diameter_mm),
        }
    }
}

pub fn load_study(dir: &Path, entry: &CorpusEntry) -> Result<LoadedStudy> {
    let (volume, _) = read_volume::<f32>(&dir.join(&entry.volume))?;
    let truth_mask = match &entry.mask {
        Some(m) => {
            let path = dir.join(m);
            let (mask, _) = read_mask(&path)?;
            if !volume.same_grid(&mask) {
                return Err(Error::format(path, "mask and volume dimensions differ"));
            }
            Some(mask)
        }
        None => None,
    };
    Ok(LoadedStudy {
        study_id: entry.study_id.clone(),
        patient_id: entry.patient_id.clone(),
        ct_type: entry.ct_type,
        volume,
        truth_mask,
        reference_diameter_mm: entry.reference_diameter_mm,
    })
}

pub fn load_corpus(dir: &Path) -> Result<(CorpusManifest, Vec<LoadedStudy>)> {
    let manifest = read_manifest(dir)?;
    let studies = manifest
        .studies
        .iter()
        .map(|e| load_study(dir, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, studies))
}

/// Clear every slice outside `lo..hi`.
pub fn apply_z_crop(mask: &mut MaskVolume, z_crop: Option<[usize; 2]>) {
    if let Some([lo, hi]) = z_crop {
        mask.crop_z(lo, hi);
    }
}

/// Measurement of a mask as a report without reference data.
pub fn measure_mask(study_id: &str, ct_type: CtType, mask: &MaskVolume) -> Result<(StudyMeasurement, StudyReport)> {
    let m = measure_study(mask);
    let mut r = StudyReport::new(study_id, ct_type, m.max_diameter_mm)?;
    r.max_slice = m.max_slice;
    Ok((m, r))
}

/// Attach reference diameter and, given both masks, Dice.
pub fn attach_truth(
    mut report: StudyReport,
    reference_diameter_mm: Option<f64>,
    predicted: &MaskVolume,
    truth: Option<&MaskVolume>,
) -> Result<StudyReport> {
    if let Some(d) = reference_diameter_mm {
        report = report.with_reference(d);
    }
    if let Some(t) = truth {
        report.dice = Some(dice_score(predicted, t)?);
    }
    Ok(report)
}

/// Segment, crop, measure and score one study.
pub fn evaluate_study(
    weights: &WeightStore<f32>,
    config: &UNetConfig,
    study: &LoadedStudy,
    z_crop: Option<[usize; 2]>,
) -> Result<(MaskVolume, StudyMeasurement, StudyReport)> {
    let mut mask = unet::segment(weights, config, &study.volume)?;
    apply_z_crop(&mut mask, z_crop);
    let (m, r) = measure_mask(&study.study_id, study.ct_type, &mask)?;
    let r = attach_truth(r, study.reference_diameter_mm, &mask, study.truth_mask.as_ref())?;
    Ok((mask, m, r))
}

pub fn fold_plan(studies: &[LoadedStudy], k: usize, seed: u64) -> Result<FoldPlan> {
    let ids: Vec<(String, String)> = studies
        .iter()
        .map(|s| (s.study_id.clone(), s.patient_id.clone()))
        .collect();
    make_folds(&ids, k, seed)
}

/// Indices of the studies whose fold is in `folds`, in corpus order.
pub fn select(studies: &[LoadedStudy], plan: &FoldPlan, folds: &[usize]) -> Vec<usize> {
    (0..studies.len())
        .filter(|&i| plan.fold_of(&studies[i].study_id).is_some_and(|f| folds.contains(&f)))
        .collect()
}

fn samples(config: &UNetConfig, studies: &[LoadedStudy], idx: &[usize]) -> Result<Vec<Sample<f32>>> {
    idx.iter()
        .map(|&i| {
            let s = &studies[i];
            let truth = s.truth_mask.as_ref().ok_or_else(|| Error::MissingField {
                study: s.study_id.clone(),
                field: "mask",
            })?;
            Sample::from_study(config, &s.study_id, &s.volume, truth)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RotationOutcome {
    pub rotation: usize,
    pub roles: FoldRoles,
    pub best: WeightStore<f32>,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
    /// Reports for the test fold, each tagged with its fold index.
    pub reports: Vec<StudyReport>,
}

/// Train on rotation `n`'s training folds, select on its validation fold and
/// evaluate its test fold. Initial weights are seeded from `(seed, n)`.
pub fn run_rotation(
    run: &RunConfig,
    studies: &[LoadedStudy],
    plan: &FoldPlan,
    n: usize,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<RotationOutcome> {
    let roles = plan.roles(n)?;
    let config = &run.network;
    let train_set = samples(config, studies, &select(studies, plan, &roles.train))?;
    let val_set = samples(config, studies, &select(studies, plan, &[roles.validation]))?;
    let init = unet::build::<f32>(config, mix_seed(run.seed, n as u64, 0))?;
    let outcome = training::train(config, init, &train_set, &val_set, &run.train_options(), on_epoch)?;
    let mut reports = Vec::new();
    for i in select(studies, plan, &[roles.test]) {
        let (_, _, mut r) = evaluate_study(&outcome.best, config, &studies[i], run.z_crop)?;
        r.fold = Some(roles.test);
        reports.push(r);
    }
    Ok(RotationOutcome {
        rotation: n,
        roles,
        best: outcome.best,
        best_epoch: outcome.best_epoch,
        history: outcome.history,
        reports,
    })
}

#[derive(Debug, Clone)]
pub struct CrossvalOutcome {
    pub plan: FoldPlan,
    pub rotations: Vec<RotationOutcome>,
    /// Every study's report, ordered by rotation then corpus order.
    pub reports: Vec<StudyReport>,
    /// One row per test fold plus the pooled "All" row.
    pub rows: Vec<SummaryRow>,
}

/// All `k` rotations. Rotations run in parallel on the current rayon pool;
/// results are collected in rotation order, so output does not depend on
/// scheduling.
pub fn crossval(run: &RunConfig, studies: &[LoadedStudy]) -> Result<CrossvalOutcome> {
    let plan = fold_plan(studies, run.folds, run.seed)?;
    let rotations = (0..run.folds)
        .into_par_iter()
        .map(|n| run_rotation(run, studies, &plan, n, |_| {}))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<StudyReport> = rotations.iter().flat_map(|r| r.reports.iter().cloned()).collect();
    let rows = aggregate_report(&reports, Grouping::Fold)?;
    Ok(CrossvalOutcome {
        plan,
        rotations,
        reports,
        rows,
    })
}

/// Output of `measure`: the measurement of one mask file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub format_version: u32,
    /// Mask header this was measured from, as given on the command line.
    pub mask_file: PathBuf,
    pub report: StudyReport,
    pub measurement: StudyMeasurement,
}

/// Fold-role table: `rotation,train,validation,test`.
pub fn roles_csv(k: usize) -> Result<String> {
    let mut s = String::from("rotation,train,validation,test\n");
    for n in 0..k {
        let r = training::fold_roles(n, k)?;
        let train: Vec<String> = r.train.iter().map(usize::to_string).collect();
        s.push_str(&format!("{n},{},{},{}\n", train.join(" "), r.validation, r.test));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate, PhantomSpec};

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = PhantomSpec::tube([16, 16, 3], [1.0, 1.0, 4.0], 4.0);
        spec.study_id = "s000".into();
        let study = generate(&spec).unwrap();
        let manifest = write_corpus(dir.path(), None, std::slice::from_ref(&study)).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
        let (_, loaded) = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded[0], LoadedStudy::from(&study));
    }

    #[test]
    fn role_table_matches_rotation_rule() {
        let t = roles_csv(5).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[1], "0,0 1 2,3,4");
        assert_eq!(lines[3], "2,2 3 4,0,1");
    }

    #[test]
    fn z_crop_clears_outside_range() {
        let mut m = MaskVolume::filled([2, 2, 5], [1.0; 3], 1).unwrap();
        apply_z_crop(&mut m, Some([1, 3]));
        assert_eq!(m.count(), 8);
        apply_z_crop(&mut m, None);
        assert_eq!(m.count(), 8);
    }
}
