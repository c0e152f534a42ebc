//! Average precision and the per-run evaluation report.

use crate::classes::{ClassId, ClassSplit};
use crate::geometry::{compute_iou, BoundingBox};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Sorts prediction indices by descending score, ties keeping input
/// order.
fn rank(preds_scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds_scores.len()).collect();
    order.sort_by(|&a, &b| {
        preds_scores[b]
            .partial_cmp(&preds_scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}

/// Greedy one-to-one matching flags for ranked predictions: each
/// prediction takes the unmatched ground-truth box in its own scene with
/// the highest overlap at or above `iou_thresh` (lowest index on ties).
fn match_flags(
    ranked: &[usize],
    preds: &[(f64, usize, BoundingBox)],
    gts: &[(usize, BoundingBox)],
    iou_thresh: f64,
) -> Vec<bool> {
    let mut taken = vec![false; gts.len()];
    let mut flags = Vec::with_capacity(ranked.len());
    for &pi in ranked {
        let (_, scene, bb) = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, (g_scene, g_bb)) in gts.iter().enumerate() {
            if taken[gi] || g_scene != scene {
                continue;
            }
            let iou = compute_iou(bb, g_bb);
            if iou < iou_thresh {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, cur)) => iou > cur,
            };
            if better {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, _)) => {
                taken[gi] = true;
                flags.push(true);
            }
            None => flags.push(false),
        }
    }
    flags
}

/// Area under the all-point interpolated precision-recall curve built
/// from the ranked true/false flags.
fn area_from_flags(flags: &[bool], ngt: usize) -> f64 {
    if ngt == 0 || flags.is_empty() {
        return 0.0;
    }
    let n = flags.len();
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(n);
    let mut precision = Vec::with_capacity(n);
    for (i, &hit) in flags.iter().enumerate() {
        if hit {
            tp += 1;
        }
        recall.push(tp as f64 / ngt as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    let mut envelope = precision.clone();
    for i in (0..n - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut area = 0.0;
    let mut prev = 0.0;
    for i in 0..n {
        area += (recall[i] - prev) * envelope[i];
        prev = recall[i];
    }
    area
}

/// Average precision over detections pooled from several scenes; a
/// prediction can only match ground truth from its own scene.
pub fn pooled_average_precision(
    preds: &[(f64, usize, BoundingBox)],
    gts: &[(usize, BoundingBox)],
    iou_thresh: f64,
) -> f64 {
    let scores: Vec<f64> = preds.iter().map(|p| p.0).collect();
    let ranked = rank(&scores);
    let flags = match_flags(&ranked, preds, gts, iou_thresh);
    area_from_flags(&flags, gts.len())
}

/// Single-scene average precision.
pub fn average_precision(
    preds: &[(f64, BoundingBox)],
    gts: &[BoundingBox],
    iou_thresh: f64,
) -> f64 {
    let preds: Vec<(f64, usize, BoundingBox)> =
        preds.iter().map(|&(s, bb)| (s, 0, bb)).collect();
    let gts: Vec<(usize, BoundingBox)> = gts.iter().map(|&bb| (0, bb)).collect();
    pooled_average_precision(&preds, &gts, iou_thresh)
}

/// Final metrics of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// AP at 0.5 overlap per class name.
    pub per_class_ap: BTreeMap<String, f64>,
    /// Mean AP over classes trained from the start.
    pub base_map: f64,
    /// Mean AP over classes seen only at fine-tuning time.
    pub novel_map: f64,
    /// Support shots per class.
    pub k: usize,
    pub seed: u64,
}

impl EvalReport {
    /// Builds the report from per-class APs, averaging each pool
    /// separately. Classes absent from `per_class` are skipped.
    pub fn from_class_aps(
        per_class: &BTreeMap<ClassId, f64>,
        split: &ClassSplit,
        k: usize,
        seed: u64,
    ) -> Self {
        let mean_over = |classes: &[ClassId]| {
            let aps: Vec<f64> = classes
                .iter()
                .filter_map(|c| per_class.get(c).copied())
                .collect();
            if aps.is_empty() {
                0.0
            } else {
                aps.iter().sum::<f64>() / aps.len() as f64
            }
        };
        EvalReport {
            per_class_ap: per_class
                .iter()
                .map(|(c, ap)| (c.to_string(), *ap))
                .collect(),
            base_map: mean_over(split.base()),
            novel_map: mean_over(split.novel()),
            k,
            seed,
        }
    }

    /// Plain `key: value` rendering, one line per field, stable order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("base_map: {}\n", self.base_map));
        out.push_str(&format!("novel_map: {}\n", self.novel_map));
        out.push_str(&format!("k: {}\n", self.k));
        out.push_str(&format!("seed: {}\n", self.seed));
        for (class, ap) in &self.per_class_ap {
            out.push_str(&format!("ap.{class}: {ap}\n"));
        }
        out
    }
}
