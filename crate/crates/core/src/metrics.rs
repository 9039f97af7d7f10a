//! Overlap metrics between a predicted segmentation and ground truth.
//!
//! `specificity` follows the table form `TN/(TP+TN)`; the usual
//! `TN/(TN+FP)` is available as [`conventional_specificity`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ForegroundMask;
use crate::segmentation::{binary_mask, LabelMap};

/// Region names for three-class maps, darkest first.
pub const ROI_NAMES: [&str; 3] = ["CSF", "GM", "WM"];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction has {pred} classes, ground truth {gt}")]
    ClassMismatch { pred: usize, gt: usize },
    #[error("dimensions differ")]
    ShapeMismatch,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Counts over the pixels of `eval_mask`; lengths must agree.
pub fn confusion(pred: &[bool], gt: &[bool], eval_mask: &ForegroundMask) -> ConfusionCounts {
    assert!(
        pred.len() == gt.len() && gt.len() == eval_mask.len(),
        "length mismatch"
    );
    let mut c = ConfusionCounts::default();
    for p in 0..pred.len() {
        if !eval_mask.is_foreground(p) {
            continue;
        }
        match (pred[p], gt[p]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

pub fn jaccard(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.tp, c.tp + c.fp + c.fn_)
}

pub fn sensitivity(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.tp, c.tp + c.fn_)
}

/// `TN/(TP+TN)`.
pub fn specificity(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.tn, c.tp + c.tn)
}

/// `TN/(TN+FP)`.
pub fn conventional_specificity(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.tn, c.tn + c.fp)
}

pub fn dice(c: &ConfusionCounts) -> Option<f64> {
    ratio(2 * c.tp, 2 * c.tp + c.fn_ + c.fp)
}

/// Metrics of one region of interest; `None` marks an undefined ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiMetrics {
    pub roi: String,
    pub counts: ConfusionCounts,
    pub jaccard: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub dice: Option<f64>,
    pub conventional_specificity: Option<f64>,
}

impl RoiMetrics {
    pub fn from_counts(roi: impl Into<String>, counts: ConfusionCounts) -> Self {
        Self {
            roi: roi.into(),
            jaccard: jaccard(&counts),
            sensitivity: sensitivity(&counts),
            specificity: specificity(&counts),
            dice: dice(&counts),
            conventional_specificity: conventional_specificity(&counts),
            counts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rois: Vec<RoiMetrics>,
}

pub fn roi_name(i: usize, n_classes: usize) -> String {
    if n_classes == ROI_NAMES.len() {
        ROI_NAMES[i].to_string()
    } else {
        format!("class{i}")
    }
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "undefined".to_string(),
    }
}

impl MetricsReport {
    pub fn roi(&self, name: &str) -> Option<&RoiMetrics> {
        self.rois.iter().find(|r| r.roi == name)
    }

    pub const CSV_HEADER: &'static str =
        "roi,jaccard,sensitivity,specificity,dice,conventional_specificity,tp,fp,tn,fn";

    /// CSV with one row per region, six decimals, `undefined` for missing values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rois {
            let c = r.counts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.roi,
                fmt_metric(r.jaccard),
                fmt_metric(r.sensitivity),
                fmt_metric(r.specificity),
                fmt_metric(r.dice),
                fmt_metric(r.conventional_specificity),
                c.tp,
                c.fp,
                c.tn,
                c.fn_
            );
        }
        out
    }
}

/// Per-class metrics of `pred` against `gt` over `eval_mask`.
pub fn evaluate(
    pred: &LabelMap,
    gt: &LabelMap,
    eval_mask: &ForegroundMask,
) -> Result<MetricsReport, MetricsError> {
    if pred.n_classes() != gt.n_classes() {
        return Err(MetricsError::ClassMismatch {
            pred: pred.n_classes(),
            gt: gt.n_classes(),
        });
    }
    if pred.width() != gt.width() || pred.height() != gt.height() || eval_mask.len() != gt.len() {
        return Err(MetricsError::ShapeMismatch);
    }
    let n = gt.n_classes();
    let rois = (0..n)
        .map(|i| {
            let counts = confusion(&binary_mask(pred, i), &binary_mask(gt, i), eval_mask);
            RoiMetrics::from_counts(roi_name(i, n), counts)
        })
        .collect();
    Ok(MetricsReport { rois })
}
