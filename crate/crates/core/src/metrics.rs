//! Segmentation overlap and detection scoring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::voxelcore::{BBox3, Mask};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("mask geometries differ")]
    GeometryMismatch,
    #[error("average precision is undefined without ground truth")]
    NoGroundTruth,
    #[error("at least one class is required")]
    NoClasses,
    #[error("boost is undefined when the unguided match count is zero")]
    UndefinedBoost,
    #[error("case count must be positive")]
    NoCases,
}

/// A scored box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox3,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `(detection index, gt index, IoU)` for every true positive.
    pub pairs: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Every ground truth found, nothing extra kept.
    Match,
    /// At least one ground truth missed.
    NoFN,
    /// Everything found but extra detections kept.
    NoFP,
}

impl Verdict {
    /// Table-style label: `Yes`, `No`, or `No (FP)`.
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Match => "Yes",
            Verdict::NoFN => "No",
            Verdict::NoFP => "No (FP)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub verdict: Verdict,
    pub kept_count: usize,
    pub gt_count: usize,
}

fn overlap_counts(a: &Mask, b: &Mask) -> Result<(usize, usize, usize), MetricsError> {
    if a.geometry() != b.geometry() {
        return Err(MetricsError::GeometryMismatch);
    }
    let (mut na, mut nb, mut inter) = (0, 0, 0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += usize::from(x);
        nb += usize::from(y);
        inter += usize::from(x && y);
    }
    Ok((na, nb, inter))
}

/// Dice similarity `2|a∩b| / (|a| + |b|)`; two empty masks score 1.
pub fn dsc(a: &Mask, b: &Mask) -> Result<f64, MetricsError> {
    let (na, nb, inter) = overlap_counts(a, b)?;
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// The overlap quotient `|a∩b| / (|a| + |b|)` without the factor two.
/// Reported alongside [`dsc`] as a diagnostic; half of it for non-empty masks.
pub fn dsc_unscaled(a: &Mask, b: &Mask) -> Result<f64, MetricsError> {
    let (na, nb, inter) = overlap_counts(a, b)?;
    if na + nb == 0 {
        return Ok(0.5);
    }
    Ok(inter as f64 / (na + nb) as f64)
}

/// Voxel-count intersection over union of two boxes.
pub fn iou3d(a: &BBox3, b: &BBox3) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.voxel_count());
    if inter == 0 {
        return 0.0;
    }
    let union = a.voxel_count() + b.voxel_count() - inter;
    inter as f64 / union as f64
}

/// Detection indices sorted by descending score; ties keep input order.
pub(crate) fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].score.total_cmp(&dets[i].score).then(i.cmp(&j)));
    order
}

/// Greedy matching in descending score order. Each detection takes the
/// unmatched ground truth with the highest IoU (lower index on ties) if that
/// IoU reaches `iou_thr`; otherwise it is a false positive.
pub fn match_detections(dets: &[Detection], gts: &[BBox3], iou_thr: f64) -> MatchResult {
    let mut taken = vec![false; gts.len()];
    let mut result = MatchResult::default();
    for di in score_order(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let iou = iou3d(&dets[di].bbox, gt);
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, iou)) if iou >= iou_thr => {
                taken[gi] = true;
                result.tp += 1;
                result.pairs.push((di, gi, iou));
            }
            _ => result.fp += 1,
        }
    }
    result.fn_ = taken.iter().filter(|&&t| !t).count();
    result
}

/// Mean over classes of `TP / (TP + FP)`; a class with no detections
/// contributes 0.
pub fn mean_class_precision(per_class: &[MatchResult]) -> Result<f64, MetricsError> {
    if per_class.is_empty() {
        return Err(MetricsError::NoClasses);
    }
    let sum: f64 = per_class
        .iter()
        .map(|m| if m.tp + m.fp == 0 { 0.0 } else { m.tp as f64 / (m.tp + m.fp) as f64 })
        .sum();
    Ok(sum / per_class.len() as f64)
}

/// All-point interpolated average precision for one image.
pub fn average_precision(dets: &[Detection], gts: &[BBox3], iou_thr: f64) -> Result<f64, MetricsError> {
    average_precision_pooled(&[(dets.to_vec(), gts.to_vec())], iou_thr)
}

/// Average precision over several images: detections are matched within
/// their own image, then ranked together by score.
pub fn average_precision_pooled(images: &[(Vec<Detection>, Vec<BBox3>)], iou_thr: f64) -> Result<f64, MetricsError> {
    let total_gt: usize = images.iter().map(|(_, g)| g.len()).sum();
    if total_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    // (score, image, det index, is_tp)
    let mut ranked = Vec::new();
    for (img, (dets, gts)) in images.iter().enumerate() {
        let m = match_detections(dets, gts, iou_thr);
        let mut tp = vec![false; dets.len()];
        for &(di, _, _) in &m.pairs {
            tp[di] = true;
        }
        for (di, d) in dets.iter().enumerate() {
            ranked.push((d.score, img, di, tp[di]));
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut precision = Vec::with_capacity(ranked.len());
    let mut recall = Vec::with_capacity(ranked.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, _, _, is_tp) in &ranked {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / total_gt as f64);
    }
    // precision envelope, right to left
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..recall.len() {
        ap += (recall[k] - prev_recall) * precision[k];
        prev_recall = recall[k];
    }
    Ok(ap)
}

/// Summarizes a kept set against ground truth as a match verdict.
pub fn case_outcome(kept: &[Detection], gts: &[BBox3], iou_thr: f64) -> CaseOutcome {
    let m = match_detections(kept, gts, iou_thr);
    let verdict = if m.fn_ > 0 {
        Verdict::NoFN
    } else if m.fp > 0 {
        Verdict::NoFP
    } else {
        Verdict::Match
    };
    CaseOutcome { verdict, kept_count: kept.len(), gt_count: gts.len() }
}

/// Relative improvement `100 · (guided − unguided) / unguided`.
pub fn boost_percent(unguided_matches: usize, guided_matches: usize, n_cases: usize) -> Result<f64, MetricsError> {
    if n_cases == 0 {
        return Err(MetricsError::NoCases);
    }
    if unguided_matches == 0 {
        return Err(MetricsError::UndefinedBoost);
    }
    Ok(100.0 * (guided_matches as f64 - unguided_matches as f64) / unguided_matches as f64)
}
