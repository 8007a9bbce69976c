//! Detections and greedy non-maximum suppression.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;

pub const DEFAULT_NMS_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Clipped box in original image pixels.
    pub bbox: BBox,
    pub score: f64,
    pub component_id: usize,
    pub level: usize,
    /// Top-left root cell at `level`, unpadded (may be negative).
    pub root: (i64, i64),
    /// Top-left part cells one octave finer, unpadded.
    pub part_placements: Vec<(i64, i64)>,
}

/// Order used for every ranked list of detections: score descending, then
/// `(level, y, x, component)` ascending.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.level.cmp(&b.level))
        .then(a.root.1.cmp(&b.root.1))
        .then(a.root.0.cmp(&b.root.0))
        .then(a.component_id.cmp(&b.component_id))
}

/// Greedy suppression: walk detections by [`detection_order`] and keep one
/// iff its IoU with every kept detection is below `overlap`.
pub fn nms(mut detections: Vec<Detection>, overlap: f64) -> Vec<Detection> {
    detections.sort_by(detection_order);
    let mut kept: Vec<Detection> = Vec::new();
    for d in detections {
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) < overlap) {
            kept.push(d);
        }
    }
    kept
}
