//! Detection loss: focal classification over every cell plus an IoU term
//! on cells whose center lies inside a ground-truth box. Both parts are
//! assembled from differentiable tape operations.

use crate::classes::ClassId;
use crate::error::HarnessError;
use crate::geometry::BoundingBox;
use aaf_core::tape::{EwOp, Var};
use aaf_core::{GradTape64, Tensor64};

/// Weight of the positive class in the focal loss; the focusing exponent
/// is fixed at two.
pub const FOCAL_ALPHA: f64 = 0.25;

/// Center of a cell in image pixels, for a `grid`-per-side map.
pub fn cell_center(index: usize, grid: usize, stride: usize) -> (f64, f64) {
    let row = index / grid;
    let col = index % grid;
    (
        (col as f64 + 0.5) * stride as f64,
        (row as f64 + 0.5) * stride as f64,
    )
}

/// Which cells are positive for one class, and the box each must regress.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTargets {
    /// Cell indices in ascending order.
    pub positives: Vec<usize>,
    /// Ground-truth box per positive, aligned with `positives`.
    pub boxes: Vec<BoundingBox>,
}

impl CellTargets {
    pub fn npos(&self) -> usize {
        self.positives.len()
    }
}

/// Assigns cells by strict center containment; a center inside several
/// boxes of the class takes the smallest-area one.
pub fn cell_targets(
    objects: &[(ClassId, BoundingBox)],
    class: ClassId,
    grid: usize,
    stride: usize,
) -> CellTargets {
    let mut positives = Vec::new();
    let mut boxes = Vec::new();
    for idx in 0..grid * grid {
        let (cx, cy) = cell_center(idx, grid, stride);
        let mut best: Option<&BoundingBox> = None;
        for (c, bb) in objects {
            if *c != class {
                continue;
            }
            if cx > bb.x0 && cx < bb.x1 && cy > bb.y0 && cy < bb.y1 {
                let better = match best {
                    None => true,
                    Some(cur) => bb.area() < cur.area(),
                };
                if better {
                    best = Some(bb);
                }
            }
        }
        if let Some(bb) = best {
            positives.push(idx);
            boxes.push(*bb);
        }
    }
    CellTargets { positives, boxes }
}

/// Loss contributions of one class map, kept separate so the caller can
/// normalize across classes.
pub struct ClassLossTerms {
    /// Scalar focal sum over every cell.
    pub focal: Var,
    /// Scalar sum of `-ln(IoU)` over positive cells, absent without any.
    pub iou: Option<Var>,
    pub npos: usize,
}

/// Builds the loss terms for one class's raw `[cells, 5]` head output.
pub fn class_loss_terms(
    tape: &mut GradTape64,
    head_out: Var,
    targets: &CellTargets,
    grid: usize,
    stride: usize,
) -> Result<ClassLossTerms, HarnessError> {
    let cells = grid * grid;
    let shape = tape.shape_of(head_out).to_vec();
    if shape != [cells, crate::head::HEAD_OUTPUTS] {
        return Err(aaf_core::AafError::ShapeMismatch {
            op: "class_loss_terms",
            lhs: shape,
            rhs: vec![cells, crate::head::HEAD_OUTPUTS],
        }
        .into());
    }

    // Focal part. With p = sigmoid(x):
    //   positive cells:  alpha   * (1-p)^2 * -ln(p)     = alpha   * q^2 * softplus(-x)
    //   negative cells: (1-alpha) *  p^2   * -ln(1-p)   = (1-alpha) * p^2 * softplus(x)
    let x = tape.slice_cols(head_out, 0, 1)?;
    let neg_x = tape.scale(x, -1.0);
    let p = tape.sigmoid(x);
    let q = tape.sigmoid(neg_x);
    let nll_pos = tape.softplus(neg_x);
    let nll_neg = tape.softplus(x);
    let q2 = tape.mul(q, q)?;
    let p2 = tape.mul(p, p)?;
    let pos_cellwise = tape.mul(q2, nll_pos)?;
    let neg_cellwise = tape.mul(p2, nll_neg)?;

    let mut mask = vec![0.0; cells];
    for &i in &targets.positives {
        mask[i] = 1.0;
    }
    let pos_mask = tape.constant(&Tensor64::new(vec![cells, 1], mask.clone()).expect("mask"));
    for v in mask.iter_mut() {
        *v = 1.0 - *v;
    }
    let neg_mask = tape.constant(&Tensor64::new(vec![cells, 1], mask).expect("mask"));

    let pos_masked = tape.mul(pos_cellwise, pos_mask)?;
    let neg_masked = tape.mul(neg_cellwise, neg_mask)?;
    let pos_sum = tape.sum(pos_masked);
    let neg_sum = tape.sum(neg_masked);
    let pos_scaled = tape.scale(pos_sum, FOCAL_ALPHA);
    let neg_scaled = tape.scale(neg_sum, 1.0 - FOCAL_ALPHA);
    let focal = tape.add(pos_scaled, neg_scaled)?;

    if targets.positives.is_empty() {
        return Ok(ClassLossTerms {
            focal,
            iou: None,
            npos: 0,
        });
    }

    // IoU part. Predicted distances are exp(raw) * stride, so both the
    // predicted and true boxes strictly contain the cell center and the
    // overlap is never empty.
    let npos = targets.positives.len();
    let rows = tape.gather_rows(head_out, &targets.positives)?;
    let raw = tape.slice_cols(rows, 1, 4)?;
    let expo = tape.exp(raw);
    let dist = tape.scale(expo, stride as f64);
    let l = tape.slice_cols(dist, 0, 1)?;
    let t = tape.slice_cols(dist, 1, 1)?;
    let r = tape.slice_cols(dist, 2, 1)?;
    let b = tape.slice_cols(dist, 3, 1)?;

    let mut lg = Vec::with_capacity(npos);
    let mut tg = Vec::with_capacity(npos);
    let mut rg = Vec::with_capacity(npos);
    let mut bg = Vec::with_capacity(npos);
    for (&idx, bb) in targets.positives.iter().zip(&targets.boxes) {
        let (cx, cy) = cell_center(idx, grid, stride);
        lg.push(cx - bb.x0);
        tg.push(cy - bb.y0);
        rg.push(bb.x1 - cx);
        bg.push(bb.y1 - cy);
    }
    let col = |tape: &mut GradTape64, v: Vec<f64>| {
        tape.constant(&Tensor64::new(vec![npos, 1], v).expect("target distances"))
    };
    let lg = col(tape, lg);
    let tg = col(tape, tg);
    let rg = col(tape, rg);
    let bg = col(tape, bg);

    let iw_l = tape.min(l, lg)?;
    let iw_r = tape.min(r, rg)?;
    let ih_t = tape.min(t, tg)?;
    let ih_b = tape.min(b, bg)?;
    let iw = tape.add(iw_l, iw_r)?;
    let ih = tape.add(ih_t, ih_b)?;
    let inter = tape.mul(iw, ih)?;

    let pw = tape.add(l, r)?;
    let ph = tape.add(t, b)?;
    let area_p = tape.mul(pw, ph)?;
    let gw = tape.add(lg, rg)?;
    let gh = tape.add(tg, bg)?;
    let area_g = tape.mul(gw, gh)?;
    let both = tape.add(area_p, area_g)?;
    let union = tape.elementwise(EwOp::Sub, both, inter)?;
    let iou = tape.div(inter, union)?;
    let ln_iou = tape.ln(iou);
    let ln_sum = tape.sum(ln_iou);
    let iou_loss = tape.scale(ln_sum, -1.0);

    Ok(ClassLossTerms {
        focal,
        iou: Some(iou_loss),
        npos,
    })
}

/// Combines per-class terms for one image: the sum of all focal and IoU
/// contributions, normalized by the total positive count (at least one).
pub fn combine_image_loss(
    tape: &mut GradTape64,
    terms: &[ClassLossTerms],
) -> Result<Var, HarnessError> {
    let mut npos_total = 0usize;
    let mut acc: Option<Var> = None;
    let push = |tape: &mut GradTape64, acc: &mut Option<Var>, v: Var| -> Result<(), HarnessError> {
        *acc = Some(match *acc {
            None => v,
            Some(prev) => tape.add(prev, v)?,
        });
        Ok(())
    };
    for term in terms {
        npos_total += term.npos;
        push(tape, &mut acc, term.focal)?;
        if let Some(iou) = term.iou {
            push(tape, &mut acc, iou)?;
        }
    }
    let total = acc.ok_or(HarnessError::NoShots)?;
    Ok(tape.scale(total, 1.0 / npos_total.max(1) as f64))
}
