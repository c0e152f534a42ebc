//! Turning raw head outputs into scored boxes: per-cell decoding and
//! greedy non-maximum suppression.

use crate::geometry::{compute_iou, BoundingBox};
use crate::loss::cell_center;
use aaf_core::Tensor64;

/// Decodes a raw `[cells, 5]` head output into `(score, box)` pairs for
/// cells whose sigmoid score reaches `score_thresh`. Offsets are
/// exponentiated and scaled by `stride`, mirroring the loss.
pub fn decode_cells(
    raw: &Tensor64,
    grid: usize,
    stride: usize,
    score_thresh: f64,
) -> Vec<(f64, BoundingBox)> {
    let mut out = Vec::new();
    for idx in 0..grid * grid {
        let logit = raw.at2(idx, 0);
        let score = 1.0 / (1.0 + (-logit).exp());
        if score < score_thresh {
            continue;
        }
        let (cx, cy) = cell_center(idx, grid, stride);
        let s = stride as f64;
        let l = raw.at2(idx, 1).exp() * s;
        let t = raw.at2(idx, 2).exp() * s;
        let r = raw.at2(idx, 3).exp() * s;
        let b = raw.at2(idx, 4).exp() * s;
        out.push((
            score,
            BoundingBox {
                x0: cx - l,
                y0: cy - t,
                x1: cx + r,
                y1: cy + b,
            },
        ));
    }
    out
}

/// Greedy suppression: keeps detections in descending score order,
/// dropping any that overlap an already-kept box by more than
/// `iou_thresh`. Score ties keep their input order, so the result is
/// deterministic.
pub fn nms(
    mut dets: Vec<(f64, BoundingBox)>,
    iou_thresh: f64,
    max_keep: usize,
) -> Vec<(f64, BoundingBox)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].0.partial_cmp(&dets[a].0).unwrap().then(a.cmp(&b)));
    let mut kept: Vec<(f64, BoundingBox)> = Vec::new();
    for &i in &order {
        if kept.len() >= max_keep {
            break;
        }
        let candidate = dets[i];
        let blocked = kept
            .iter()
            .any(|(_, k)| compute_iou(k, &candidate.1) > iou_thresh);
        if !blocked {
            kept.push(candidate);
        }
    }
    dets.clear();
    kept
}
