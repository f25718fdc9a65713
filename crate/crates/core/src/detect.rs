//! Study-level aneurysm decisions and the evaluation metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{CtType, MaskVolume};

/// A study is positive iff its largest diameter is strictly above this.
pub const AAA_THRESHOLD_MM: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub positive: bool,
    /// No diameter was measured at all; the study counts as negative.
    pub no_aorta: bool,
}

pub fn classify_aaa(max_diameter_mm: Option<f64>) -> Result<Classification> {
    match max_diameter_mm {
        None => Ok(Classification {
            positive: false,
            no_aorta: true,
        }),
        Some(d) if d >= 0.0 => Ok(Classification {
            positive: d > AAA_THRESHOLD_MM,
            no_aorta: false,
        }),
        Some(d) => Err(Error::InvalidArgument(format!("diameter must be non-negative, got {d}"))),
    }
}

/// `2|P∩G| / (|P| + |G|)`, and 1 when both masks are empty.
pub fn dice_score(pred: &MaskVolume, reference: &MaskVolume) -> Result<f64> {
    if pred.dims() != reference.dims() {
        return Err(Error::shape("dice_score", &pred.dims(), &reference.dims()));
    }
    let (mut both, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(reference.data()) {
        let (a, b) = (a != 0, b != 0);
        both += usize::from(a && b);
        p += usize::from(a);
        g += usize::from(b);
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (p + g) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study_id: String,
    pub ct_type: CtType,
    /// Cross-validation fold the study was tested in.
    pub fold: Option<usize>,
    pub max_diameter_mm: Option<f64>,
    pub max_slice: Option<usize>,
    pub predicted_aaa: bool,
    pub no_aorta: bool,
    pub reference_diameter_mm: Option<f64>,
    pub reference_aaa: Option<bool>,
    pub dice: Option<f64>,
    /// Predicted minus reference largest diameter.
    pub delta_mm: Option<f64>,
}

impl StudyReport {
    pub fn new(study_id: &str, ct_type: CtType, max_diameter_mm: Option<f64>) -> Result<Self> {
        let c = classify_aaa(max_diameter_mm)?;
        Ok(Self {
            study_id: study_id.to_string(),
            ct_type,
            fold: None,
            max_diameter_mm,
            max_slice: None,
            predicted_aaa: c.positive,
            no_aorta: c.no_aorta,
            reference_diameter_mm: None,
            reference_aaa: None,
            dice: None,
            delta_mm: None,
        })
    }

    /// Attach a reference diameter; the reference label uses the same strict
    /// threshold as the prediction.
    pub fn with_reference(mut self, reference_diameter_mm: f64) -> Self {
        self.reference_diameter_mm = Some(reference_diameter_mm);
        self.reference_aaa = Some(reference_diameter_mm > AAA_THRESHOLD_MM);
        self.delta_mm = self.max_diameter_mm.map(|d| d - reference_diameter_mm);
        self
    }

    fn reference(&self) -> Result<bool> {
        self.reference_aaa.ok_or_else(|| Error::MissingField {
            study: self.study_id.clone(),
            field: "reference_aaa",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub counts: ConfusionCounts,
    /// `None` when there are no reference positives.
    pub sensitivity: Option<f64>,
    /// `None` when there are no reference negatives.
    pub specificity: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_metrics(reports: &[StudyReport]) -> Result<ConfusionMetrics> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("confusion metrics of an empty report set".into()));
    }
    let mut c = ConfusionCounts::default();
    for r in reports {
        match (r.reference()?, r.predicted_aaa) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(ConfusionMetrics {
        counts: c,
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBin {
    pub lo_mm: f64,
    /// Exclusive; `None` for the open-ended last bin.
    pub hi_mm: Option<f64>,
    pub positives: usize,
    pub detected: usize,
    pub sensitivity: Option<f64>,
}

impl SensitivityBin {
    pub fn label(&self) -> String {
        match self.hi_mm {
            Some(hi) => format!("[{}, {})", self.lo_mm, hi),
            None => format!(">= {}", self.lo_mm),
        }
    }

    fn contains(&self, d: f64) -> bool {
        d >= self.lo_mm && self.hi_mm.is_none_or(|hi| d < hi)
    }
}

/// Left-closed reference-diameter bins used for stratified sensitivity.
pub const SENSITIVITY_BIN_EDGES_MM: [f64; 3] = [30.0, 40.0, 50.0];

/// Sensitivity of reference-positive studies binned by reference diameter
/// into `[30, 40)`, `[40, 50)` and `[50, ∞)`.
pub fn stratified_sensitivity(reports: &[StudyReport]) -> Result<Vec<SensitivityBin>> {
    let edges = SENSITIVITY_BIN_EDGES_MM;
    let mut bins: Vec<SensitivityBin> = (0..edges.len())
        .map(|b| SensitivityBin {
            lo_mm: edges[b],
            hi_mm: edges.get(b + 1).copied(),
            positives: 0,
            detected: 0,
            sensitivity: None,
        })
        .collect();
    for r in reports {
        if !r.reference()? {
            continue;
        }
        let d = r.reference_diameter_mm.ok_or_else(|| Error::MissingField {
            study: r.study_id.clone(),
            field: "reference_diameter_mm",
        })?;
        if let Some(bin) = bins.iter_mut().find(|b| b.contains(d)) {
            bin.positives += 1;
            bin.detected += usize::from(r.predicted_aaa);
        }
    }
    for b in &mut bins {
        b.sensitivity = ratio(b.detected, b.positives);
    }
    Ok(bins)
}

/// `√(Σ(nᵢ−1)sᵢ² / Σ(nᵢ−1))`.
pub fn pooled_std(groups: &[(usize, f64)]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::InvalidArgument("pooled_std of no groups".into()));
    }
    if let Some(&(n, _)) = groups.iter().find(|g| g.0 < 2) {
        return Err(Error::InvalidArgument(format!("pooled_std needs n >= 2 per group, got {n}")));
    }
    let (num, den) = groups.iter().fold((0.0, 0.0), |(num, den), &(n, s)| {
        let dof = (n - 1) as f64;
        (num + dof * s * s, den + dof)
    });
    Ok((num / den).sqrt())
}

/// Sample mean and standard deviation (n − 1); the deviation of a single
/// value is 0.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    CtType,
    Fold,
    Overall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: String,
    pub n: usize,
    pub dice: Option<Stat>,
    pub delta_mm: Option<Stat>,
    pub confusion: ConfusionMetrics,
}

fn stat(values: &[f64]) -> Option<Stat> {
    mean_std(values).map(|(mean, std)| Stat {
        n: values.len(),
        mean,
        std,
    })
}

/// Combine group statistics: size-weighted mean and pooled deviation over
/// the groups that have at least two values.
fn combine(stats: &[&Stat]) -> Option<Stat> {
    let n: usize = stats.iter().map(|s| s.n).sum();
    if n == 0 {
        return None;
    }
    let mean = stats.iter().map(|s| s.mean * s.n as f64).sum::<f64>() / n as f64;
    let pooled: Vec<(usize, f64)> = stats.iter().filter(|s| s.n >= 2).map(|s| (s.n, s.std)).collect();
    let std = if pooled.is_empty() { 0.0 } else { pooled_std(&pooled).expect("groups have n >= 2") };
    Some(Stat { n, mean, std })
}

fn summarize(group: String, reports: &[&StudyReport]) -> Result<SummaryRow> {
    let with_dice = reports.iter().filter(|r| r.dice.is_some()).count();
    if with_dice != 0 && with_dice != reports.len() {
        let r = reports.iter().find(|r| r.dice.is_none()).expect("some report lacks dice");
        return Err(Error::MissingField {
            study: r.study_id.clone(),
            field: "dice",
        });
    }
    let dice: Vec<f64> = reports.iter().filter_map(|r| r.dice).collect();
    // studies with no measured aorta have no delta
    let delta: Vec<f64> = reports.iter().filter_map(|r| r.delta_mm).collect();
    let owned: Vec<StudyReport> = reports.iter().map(|&r| r.clone()).collect();
    Ok(SummaryRow {
        group,
        n: reports.len(),
        dice: stat(&dice),
        delta_mm: stat(&delta),
        confusion: confusion_metrics(&owned)?,
    })
}

/// Summary rows per group in a fixed order, followed by an "All" row. The
/// "All" row's means are size-weighted group means and its deviations are
/// pooled over the groups (for [`Grouping::Overall`] it is the plain sample
/// statistic of all studies).
pub fn aggregate_report(reports: &[StudyReport], grouping: Grouping) -> Result<Vec<SummaryRow>> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to aggregate".into()));
    }
    let mut groups: BTreeMap<(usize, String), Vec<&StudyReport>> = BTreeMap::new();
    for r in reports {
        let key = match grouping {
            Grouping::CtType => (r.ct_type as usize, r.ct_type.as_str().to_string()),
            Grouping::Fold => {
                let f = r.fold.ok_or_else(|| Error::MissingField {
                    study: r.study_id.clone(),
                    field: "fold",
                })?;
                (f, format!("fold {f}"))
            }
            Grouping::Overall => continue,
        };
        groups.entry(key).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(groups.len() + 1);
    for ((_, name), members) in groups {
        rows.push(summarize(name, &members)?);
    }
    let all: Vec<&StudyReport> = reports.iter().collect();
    let mut total = summarize("All".into(), &all)?;
    if grouping != Grouping::Overall {
        total.dice = combine(&rows.iter().filter_map(|r| r.dice.as_ref()).collect::<Vec<_>>());
        total.delta_mm = combine(&rows.iter().filter_map(|r| r.delta_mm.as_ref()).collect::<Vec<_>>());
    }
    rows.push(total);
    Ok(rows)
}
