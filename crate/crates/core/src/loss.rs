//! Five-part squared-error detection loss with responsible-predictor
//! selection, plus its analytic gradient.
//!
//! The loss compares tensors entry-wise in their stored representation
//! (cell-relative center offsets, image-normalized width/height). Width and
//! height enter through their square roots so a fixed localization error
//! costs a small box more than a large one. Confidence of the responsible
//! predictor is pulled toward the IOU between its decoded box and the truth
//! box; that IOU target (and the responsible-slot choice itself) is frozen
//! with respect to the prediction when differentiating, so the gradient of
//! [`loss_given`] at a fixed [`Assignments`] is exact.

use crate::geometry::{iou, BoundingBox};
use crate::gridcodec::{CodecError, DetectionTensor};
use thiserror::Error;

/// Weights of the four penalty groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Coordinate terms (centers and square-rooted extents).
    pub lambda_coord: f64,
    /// Confidence of predictors not responsible for any object.
    pub lambda_noobj: f64,
    /// Confidence of responsible predictors.
    pub lambda_obj: f64,
    /// Per-cell classification term.
    pub lambda_class: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_coord: 5.0,
            lambda_noobj: 0.5,
            lambda_obj: 1.0,
            lambda_class: 1.0,
        }
    }
}

/// The five summands and their total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub coord_xy: f64,
    pub coord_wh: f64,
    pub conf_obj: f64,
    pub conf_noobj: f64,
    pub classification: f64,
    pub total: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("prediction and target tensors have different configs")]
    ConfigMismatch,
    #[error(transparent)]
    Shape(#[from] CodecError),
    #[error("responsible predictor in cell ({row}, {col}) slot {slot} has negative {field}")]
    NegativeDimension {
        row: usize,
        col: usize,
        slot: usize,
        field: &'static str,
    },
    #[error(
        "responsible predictor in cell ({row}, {col}) slot {slot} has {field} = 0; \
         sqrt derivative is singular"
    )]
    SqrtSingularity {
        row: usize,
        col: usize,
        slot: usize,
        field: &'static str,
    },
}

/// Among one cell's predicted boxes, the slot in charge of the truth box:
/// argmax of IOU, ties broken toward the lowest index.
pub fn assign_responsible_predictor(predicted_boxes: &[BoundingBox], truth: &BoundingBox) -> usize {
    assert!(!predicted_boxes.is_empty(), "at least one predictor slot");
    let mut best = 0;
    let mut best_iou = iou(&predicted_boxes[0], truth);
    for (slot, candidate) in predicted_boxes.iter().enumerate().skip(1) {
        let score = iou(candidate, truth);
        if score > best_iou {
            best = slot;
            best_iou = score;
        }
    }
    best
}

/// One occupied cell's resolved training targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellAssignment {
    pub row: usize,
    pub col: usize,
    /// Responsible predictor slot.
    pub slot: usize,
    /// Frozen confidence target: IOU of the responsible decoded box against
    /// the decoded truth box at the prediction this was resolved for.
    pub confidence_target: f64,
}

/// Responsible slots and confidence targets for every occupied cell.
pub type Assignments = Vec<CellAssignment>;

fn decoded_box(tensor: &DetectionTensor, row: usize, col: usize, slot: usize) -> BoundingBox {
    let [x_off, y_off, w, h, _] = tensor.predictor(row, col, slot);
    let s = tensor.config.s as f64;
    BoundingBox {
        x: (col as f64 + x_off) / s,
        y: (row as f64 + y_off) / s,
        w,
        h,
    }
}

fn check_same_shape(prediction: &DetectionTensor, target: &DetectionTensor) -> Result<(), LossError> {
    if prediction.config != target.config {
        return Err(LossError::ConfigMismatch);
    }
    for t in [prediction, target] {
        if t.values.len() != t.config.tensor_len() {
            return Err(LossError::Shape(CodecError::ShapeMismatch {
                expected: t.config.tensor_len(),
                actual: t.values.len(),
            }));
        }
    }
    Ok(())
}

/// Resolve responsible predictors and confidence targets at `prediction`.
///
/// A cell counts as occupied when the target's predictor slot 0 carries
/// positive confidence (the convention produced by `gridcodec::encode`).
pub fn resolve_assignments(
    prediction: &DetectionTensor,
    target: &DetectionTensor,
) -> Result<Assignments, LossError> {
    check_same_shape(prediction, target)?;
    let config = &prediction.config;

    let mut assignments = Vec::new();
    for row in 0..config.s {
        for col in 0..config.s {
            let truth_conf = target.predictor(row, col, 0)[4];
            if truth_conf <= 0.0 {
                continue;
            }
            let truth_box = decoded_box(target, row, col, 0);
            let candidates: Vec<BoundingBox> = (0..config.b)
                .map(|slot| decoded_box(prediction, row, col, slot))
                .collect();
            let slot = assign_responsible_predictor(&candidates, &truth_box);
            assignments.push(CellAssignment {
                row,
                col,
                slot,
                confidence_target: iou(&candidates[slot], &truth_box),
            });
        }
    }
    Ok(assignments)
}

/// Evaluate the loss at a fixed set of assignments.
///
/// This is the function the gradient differentiates: with `assignments`
/// frozen it is smooth in every prediction entry (away from zero
/// width/height on responsible slots).
pub fn loss_given(
    prediction: &DetectionTensor,
    target: &DetectionTensor,
    assignments: &Assignments,
    weights: &LossWeights,
) -> Result<LossBreakdown, LossError> {
    check_same_shape(prediction, target)?;
    let config = &prediction.config;

    let mut coord_xy = 0.0;
    let mut coord_wh = 0.0;
    let mut conf_obj = 0.0;
    let mut classification = 0.0;

    // (cell index, slot) pairs excluded from the no-object sweep.
    let mut responsible = vec![usize::MAX; config.s * config.s];
    for a in assignments {
        responsible[a.row * config.s + a.col] = a.slot;
    }

    for a in assignments {
        let pred = prediction.predictor(a.row, a.col, a.slot);
        let truth = target.predictor(a.row, a.col, 0);

        coord_xy += (truth[0] - pred[0]).powi(2) + (truth[1] - pred[1]).powi(2);

        for (field, idx) in [("w", 2), ("h", 3)] {
            if pred[idx] < 0.0 {
                return Err(LossError::NegativeDimension {
                    row: a.row,
                    col: a.col,
                    slot: a.slot,
                    field,
                });
            }
        }
        coord_wh += (truth[2].sqrt() - pred[2].sqrt()).powi(2)
            + (truth[3].sqrt() - pred[3].sqrt()).powi(2);

        conf_obj += (a.confidence_target - pred[4]).powi(2);

        let pred_probs = prediction.class_probs(a.row, a.col);
        let truth_probs = target.class_probs(a.row, a.col);
        classification += pred_probs
            .iter()
            .zip(truth_probs)
            .map(|(p, t)| (t - p).powi(2))
            .sum::<f64>();
    }

    let mut conf_noobj = 0.0;
    for row in 0..config.s {
        for col in 0..config.s {
            let responsible_slot = responsible[row * config.s + col];
            for slot in 0..config.b {
                if slot != responsible_slot {
                    conf_noobj += prediction.predictor(row, col, slot)[4].powi(2);
                }
            }
        }
    }

    let coord_xy = weights.lambda_coord * coord_xy;
    let coord_wh = weights.lambda_coord * coord_wh;
    let conf_obj = weights.lambda_obj * conf_obj;
    let conf_noobj = weights.lambda_noobj * conf_noobj;
    let classification = weights.lambda_class * classification;
    Ok(LossBreakdown {
        coord_xy,
        coord_wh,
        conf_obj,
        conf_noobj,
        classification,
        total: coord_xy + coord_wh + conf_obj + conf_noobj + classification,
    })
}

/// Full loss: resolve assignments at `prediction`, then evaluate.
pub fn yolo_loss(
    prediction: &DetectionTensor,
    target: &DetectionTensor,
    weights: &LossWeights,
) -> Result<LossBreakdown, LossError> {
    let assignments = resolve_assignments(prediction, target)?;
    loss_given(prediction, target, &assignments, weights)
}

/// Analytic partial derivatives of the total loss with respect to every
/// prediction entry, at assignments frozen for this prediction.
pub fn loss_gradient(
    prediction: &DetectionTensor,
    target: &DetectionTensor,
    weights: &LossWeights,
) -> Result<DetectionTensor, LossError> {
    let assignments = resolve_assignments(prediction, target)?;
    loss_gradient_given(prediction, target, &assignments, weights)
}

/// Gradient of [`loss_given`] at a fixed set of assignments.
pub fn loss_gradient_given(
    prediction: &DetectionTensor,
    target: &DetectionTensor,
    assignments: &Assignments,
    weights: &LossWeights,
) -> Result<DetectionTensor, LossError> {
    check_same_shape(prediction, target)?;
    let config = &prediction.config;
    let mut grad = DetectionTensor::zeros(*config);

    let mut responsible = vec![usize::MAX; config.s * config.s];
    for a in assignments {
        responsible[a.row * config.s + a.col] = a.slot;
    }

    // No-object confidence slots.
    for row in 0..config.s {
        for col in 0..config.s {
            let responsible_slot = responsible[row * config.s + col];
            for slot in 0..config.b {
                if slot != responsible_slot {
                    let base = grad.cell_base(row, col) + 5 * slot;
                    grad.values[base + 4] =
                        2.0 * weights.lambda_noobj * prediction.values[base + 4];
                }
            }
        }
    }

    for a in assignments {
        let base = grad.cell_base(a.row, a.col) + 5 * a.slot;
        let pred = prediction.predictor(a.row, a.col, a.slot);
        let truth = target.predictor(a.row, a.col, 0);

        for (field, idx) in [("w", 2), ("h", 3)] {
            if pred[idx] <= 0.0 {
                return Err(LossError::SqrtSingularity {
                    row: a.row,
                    col: a.col,
                    slot: a.slot,
                    field,
                });
            }
        }

        grad.values[base] = 2.0 * weights.lambda_coord * (pred[0] - truth[0]);
        grad.values[base + 1] = 2.0 * weights.lambda_coord * (pred[1] - truth[1]);
        // d/dw (sqrt(w) - sqrt(t))^2 = 1 - sqrt(t)/sqrt(w)
        grad.values[base + 2] =
            weights.lambda_coord * (1.0 - (truth[2].sqrt() / pred[2].sqrt()));
        grad.values[base + 3] =
            weights.lambda_coord * (1.0 - (truth[3].sqrt() / pred[3].sqrt()));
        grad.values[base + 4] = 2.0 * weights.lambda_obj * (pred[4] - a.confidence_target);

        let class_base = grad.cell_base(a.row, a.col) + 5 * config.b;
        for c in 0..config.c {
            grad.values[class_base + c] = 2.0
                * weights.lambda_class
                * (prediction.values[class_base + c] - target.values[class_base + c]);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridcodec::{encode, GridConfig, GroundTruthObject};
    use approx::assert_relative_eq;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox { x, y, w, h }
    }

    #[test]
    fn responsible_predictor_single_slot() {
        let truth = bx(0.5, 0.5, 0.4, 0.4);
        assert_eq!(assign_responsible_predictor(&[bx(0.1, 0.1, 0.1, 0.1)], &truth), 0);
    }

    #[test]
    fn responsible_predictor_argmax() {
        let truth = bx(0.5, 0.5, 0.4, 0.4);
        let far = bx(0.2, 0.2, 0.1, 0.1);
        let near = bx(0.5, 0.5, 0.38, 0.4);
        assert_eq!(assign_responsible_predictor(&[far, near], &truth), 1);
    }

    #[test]
    fn responsible_predictor_tie_breaks_low() {
        let truth = bx(0.5, 0.5, 0.4, 0.4);
        let same = bx(0.5, 0.5, 0.3, 0.3);
        assert_eq!(assign_responsible_predictor(&[same, same], &truth), 0);
    }

    /// Prediction that exactly reproduces the target's objects with IOU 1.
    fn perfect_prediction(target: &DetectionTensor) -> DetectionTensor {
        target.clone()
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let cfg = GridConfig::new(3, 2, 4).unwrap();
        let objects = [
            GroundTruthObject { box_: bx(0.2, 0.2, 0.3, 0.25), category: 1 },
            GroundTruthObject { box_: bx(0.8, 0.7, 0.2, 0.4), category: 3 },
        ];
        let target = encode(&objects, &cfg).unwrap();
        let pred = perfect_prediction(&target);
        let loss = yolo_loss(&pred, &target, &LossWeights::default()).unwrap();
        assert_eq!(loss.total, 0.0);
        assert_eq!(loss.coord_xy, 0.0);
        assert_eq!(loss.coord_wh, 0.0);
        assert_eq!(loss.conf_obj, 0.0);
        assert_eq!(loss.conf_noobj, 0.0);
        assert_eq!(loss.classification, 0.0);
    }

    #[test]
    fn single_cell_shifted_center_matches_scalar_reference() {
        // S=1, B=1, C=1: truth box (0.5, 0.5, 0.4, 0.4), prediction
        // identical except x = 0.3, confidence 1. Scalar walk of each term:
        //   coord_xy = 5 * 0.2^2 = 0.2
        //   iou of x-shifted box: inter 0.2*0.4, union 2*0.16 - 0.08 = 0.24
        //   conf_obj = (1/3 - 1)^2 = 4/9
        let cfg = GridConfig::new(1, 1, 1).unwrap();
        let target = encode(
            &[GroundTruthObject { box_: bx(0.5, 0.5, 0.4, 0.4), category: 0 }],
            &cfg,
        )
        .unwrap();
        let mut pred = target.clone();
        pred.values[0] = 0.3;

        let loss = yolo_loss(&pred, &target, &LossWeights::default()).unwrap();
        assert_relative_eq!(loss.coord_xy, 5.0 * 0.04, epsilon = 1e-12);
        assert_eq!(loss.coord_wh, 0.0);
        assert_relative_eq!(loss.conf_obj, (1.0_f64 / 3.0 - 1.0).powi(2), epsilon = 1e-12);
        assert_eq!(loss.conf_noobj, 0.0);
        assert_eq!(loss.classification, 0.0);
        assert_relative_eq!(
            loss.total,
            0.2 + 4.0 / 9.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn empty_target_leaves_only_noobj_term() {
        let cfg = GridConfig::new(2, 2, 3).unwrap();
        let target = DetectionTensor::zeros(cfg);
        let mut pred = DetectionTensor::zeros(cfg);
        // Fill every confidence slot with 0.5: 2*2 cells * 2 slots.
        for row in 0..2 {
            for col in 0..2 {
                for slot in 0..2 {
                    let idx = pred.cell_base(row, col) + 5 * slot + 4;
                    pred.values[idx] = 0.5;
                }
            }
        }
        let loss = yolo_loss(&pred, &target, &LossWeights::default()).unwrap();
        assert_eq!(loss.coord_xy, 0.0);
        assert_eq!(loss.conf_obj, 0.0);
        assert_eq!(loss.classification, 0.0);
        assert_relative_eq!(loss.conf_noobj, 0.5 * 8.0 * 0.25, epsilon = 1e-12);
        assert_eq!(loss.total, loss.conf_noobj);
    }

    #[test]
    fn config_mismatch_is_rejected() {
        let a = DetectionTensor::zeros(GridConfig::new(2, 1, 1).unwrap());
        let b = DetectionTensor::zeros(GridConfig::new(3, 1, 1).unwrap());
        assert_eq!(
            yolo_loss(&a, &b, &LossWeights::default()),
            Err(LossError::ConfigMismatch)
        );
    }

    #[test]
    fn negative_extent_is_rejected() {
        let cfg = GridConfig::new(1, 1, 1).unwrap();
        let target = encode(
            &[GroundTruthObject { box_: bx(0.5, 0.5, 0.4, 0.4), category: 0 }],
            &cfg,
        )
        .unwrap();
        let mut pred = target.clone();
        pred.values[2] = -0.1;
        assert!(matches!(
            yolo_loss(&pred, &target, &LossWeights::default()),
            Err(LossError::NegativeDimension { field: "w", .. })
        ));
    }

    #[test]
    fn gradient_rejects_zero_extent_on_responsible_slot() {
        let cfg = GridConfig::new(1, 1, 1).unwrap();
        let target = encode(
            &[GroundTruthObject { box_: bx(0.5, 0.5, 0.4, 0.4), category: 0 }],
            &cfg,
        )
        .unwrap();
        let mut pred = target.clone();
        pred.values[3] = 0.0;
        assert!(matches!(
            loss_gradient(&pred, &target, &LossWeights::default()),
            Err(LossError::SqrtSingularity { field: "h", .. })
        ));
    }

    #[test]
    fn perfect_prediction_has_zero_coord_gradient() {
        let cfg = GridConfig::new(2, 2, 2).unwrap();
        let target = encode(
            &[GroundTruthObject { box_: bx(0.3, 0.3, 0.4, 0.3), category: 1 }],
            &cfg,
        )
        .unwrap();
        let grad = loss_gradient(&target.clone(), &target, &LossWeights::default()).unwrap();
        let base = grad.cell_base(0, 0);
        assert_eq!(&grad.values[base..base + 5], &[0.0; 5]);
    }

    #[test]
    fn gradient_of_unoccupied_entries_touches_only_confidence() {
        let cfg = GridConfig::new(2, 2, 2).unwrap();
        let target = DetectionTensor::zeros(cfg);
        let mut pred = DetectionTensor::zeros(cfg);
        for v in pred.values.iter_mut() {
            *v = 0.25;
        }
        let grad = loss_gradient(&pred, &target, &LossWeights::default()).unwrap();
        for row in 0..2 {
            for col in 0..2 {
                for slot in 0..2 {
                    let base = grad.cell_base(row, col) + 5 * slot;
                    assert_eq!(&grad.values[base..base + 4], &[0.0; 4]);
                    assert_relative_eq!(
                        grad.values[base + 4],
                        2.0 * 0.5 * 0.25,
                        epsilon = 1e-12
                    );
                }
                let class_base = grad.cell_base(row, col) + 10;
                assert_eq!(&grad.values[class_base..class_base + 2], &[0.0; 2]);
            }
        }
    }
}
