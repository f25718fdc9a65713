//! CSV renderings of histories, per-study reports and summary tables.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! aggregate can be recomputed exactly from the per-study CSV. Missing values
//! are empty cells.

use std::fmt::Write as _;

use crate::detect::{SensitivityBin, StudyReport, SummaryRow};
use crate::training::EpochRecord;

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for r in history {
        writeln!(s, "{},{},{}", r.epoch, r.train_loss, r.val_loss).unwrap();
    }
    s
}

pub fn reports_csv(reports: &[StudyReport]) -> String {
    let mut s = String::from(
        "study_id,ct_type,fold,max_diameter_mm,max_slice,predicted_aaa,no_aorta,reference_diameter_mm,reference_aaa,dice,delta_mm\n",
    );
    for r in reports {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.study_id,
            r.ct_type.as_str(),
            opt(r.fold),
            opt(r.max_diameter_mm),
            opt(r.max_slice),
            r.predicted_aaa,
            r.no_aorta,
            opt(r.reference_diameter_mm),
            opt(r.reference_aaa),
            opt(r.dice),
            opt(r.delta_mm),
        )
        .unwrap();
    }
    s
}

/// Mean Dice and mean delta with deviations, one row per group.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("group,n,dice_n,dice_mean,dice_std,delta_n,delta_mean,delta_std\n");
    for r in rows {
        let (dn, dm, ds) = r.dice.as_ref().map_or((None, None, None), |d| (Some(d.n), Some(d.mean), Some(d.std)));
        let (en, em, es) = r
            .delta_mm
            .as_ref()
            .map_or((None, None, None), |d| (Some(d.n), Some(d.mean), Some(d.std)));
        writeln!(s, "{},{},{},{},{},{},{},{}", r.group, r.n, opt(dn), opt(dm), opt(ds), opt(en), opt(em), opt(es)).unwrap();
    }
    s
}

/// Confusion counts with sensitivity and specificity, one row per group.
pub fn detection_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("group,n,tp,fp,tn,fn,sensitivity,specificity\n");
    for r in rows {
        let c = r.confusion.counts;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.group,
            r.n,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            opt(r.confusion.sensitivity),
            opt(r.confusion.specificity)
        )
        .unwrap();
    }
    s
}

/// Sensitivity per reference-diameter bin, one row per `(group, bin)`.
pub fn stratified_csv(groups: &[(String, Vec<SensitivityBin>)]) -> String {
    let mut s = String::from("group,bin,positives,detected,sensitivity\n");
    for (group, bins) in groups {
        for b in bins {
            writeln!(s, "{},{},{},{},{}", group, b.label(), b.positives, b.detected, opt(b.sensitivity)).unwrap();
        }
    }
    s
}
