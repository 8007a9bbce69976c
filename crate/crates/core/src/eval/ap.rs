//! Detection-to-ground-truth matching and average precision.

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;

pub const DEFAULT_MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchLabel {
    TruePositive,
    FalsePositive,
    /// Overlaps a difficult box only; excluded from the ranking.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub bbox: BBox,
    #[serde(default)]
    pub difficult: bool,
}

/// Labels detections of one image, given best first. Each detection takes
/// the highest-IoU still-unmatched non-difficult box with IoU >= `iou`
/// (ties to the lower index) and becomes a true positive; failing that, a
/// detection overlapping a difficult box by >= `iou` is ignored; otherwise
/// it is a false positive.
pub fn match_detections(detections: &[BBox], truth: &[GroundTruthBox], iou: f64) -> Vec<MatchLabel> {
    let mut matched = vec![false; truth.len()];
    detections
        .iter()
        .map(|d| match_one(d, truth, &mut matched, iou))
        .collect()
}

fn match_one(d: &BBox, truth: &[GroundTruthBox], matched: &mut [bool], iou: f64) -> MatchLabel {
    let mut best: Option<(usize, f64)> = None;
    for (j, g) in truth.iter().enumerate() {
        if g.difficult || matched[j] {
            continue;
        }
        let o = d.iou(&g.bbox);
        if o >= iou && best.is_none_or(|(_, b)| o > b) {
            best = Some((j, o));
        }
    }
    if let Some((j, _)) = best {
        matched[j] = true;
        MatchLabel::TruePositive
    } else if truth.iter().any(|g| g.difficult && d.iou(&g.bbox) >= iou) {
        MatchLabel::Ignored
    } else {
        MatchLabel::FalsePositive
    }
}

/// Precision/recall at every rank of a labelled ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub ap: f64,
}

fn curve(labels: &[MatchLabel], n_positive: usize) -> (Vec<f64>, Vec<f64>) {
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for l in labels {
        match l {
            MatchLabel::TruePositive => tp += 1,
            MatchLabel::FalsePositive => fp += 1,
            MatchLabel::Ignored => continue,
        }
        recall.push(if n_positive > 0 {
            tp as f64 / n_positive as f64
        } else {
            0.0
        });
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    (recall, precision)
}

/// Area under the monotone precision envelope at every recall step:
/// `sum_k (r_k - r_{k-1}) * max_{j >= k} p_j`. With no positives the AP is 0.
pub fn average_precision(labels: &[MatchLabel], n_positive: usize) -> PrCurve {
    let (recall, precision) = curve(labels, n_positive);
    if n_positive == 0 {
        if !recall.is_empty() {
            log::warn!("average precision requested with no positives; reporting 0");
        }
        return PrCurve {
            recall,
            precision,
            ap: 0.0,
        };
    }
    let mut envelope = precision.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (r, p) in recall.iter().zip(&envelope) {
        ap += (r - prev) * p;
        prev = *r;
    }
    PrCurve { recall, precision, ap }
}

/// Eleven-point interpolated AP (recall thresholds 0, 0.1, ..., 1).
pub fn average_precision_11pt(labels: &[MatchLabel], n_positive: usize) -> PrCurve {
    let (recall, precision) = curve(labels, n_positive);
    let mut ap = 0.0;
    if n_positive > 0 {
        for t in 0..=10 {
            let t = t as f64 / 10.0;
            let p = recall
                .iter()
                .zip(&precision)
                .filter(|(r, _)| **r >= t)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max);
            ap += p / 11.0;
        }
    }
    PrCurve { recall, precision, ap }
}

/// One scored box on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBox {
    pub image: usize,
    pub bbox: BBox,
    pub score: f64,
}

/// Pools detections from all images, ranks them by score (stable in input
/// order), matches per image and computes the AP. `truth[i]` holds the
/// boxes of image `i`.
pub fn evaluate_detections(
    detections: &[ScoredBox],
    truth: &[Vec<GroundTruthBox>],
    iou: f64,
    eleven_point: bool,
) -> PrCurve {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));
    let mut matched: Vec<Vec<bool>> = truth.iter().map(|t| vec![false; t.len()]).collect();
    let mut labels = Vec::with_capacity(order.len());
    for &k in &order {
        let d = &detections[k];
        labels.push(match_one(&d.bbox, &truth[d.image], &mut matched[d.image], iou));
    }
    let n_positive = truth.iter().flatten().filter(|g| !g.difficult).count();
    if eleven_point {
        average_precision_11pt(&labels, n_positive)
    } else {
        average_precision(&labels, n_positive)
    }
}
