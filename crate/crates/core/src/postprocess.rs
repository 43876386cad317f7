//! From a prediction tensor to final detections: category-specific scoring,
//! threshold filtering, and greedy per-class non-max suppression.

use crate::geometry::{iou, ScoredDetection};
use crate::gridcodec::{decode, CodecError, DetectionTensor};
use serde::Serialize;

/// Score threshold and NMS overlap threshold, both in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessConfig {
    pub score_threshold: f64,
    pub nms_iou_threshold: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            score_threshold: 0.2,
            nms_iou_threshold: 0.5,
        }
    }
}

/// Category-specific confidence scores: elementwise product of the class
/// probabilities with the box confidence.
pub fn class_confidence(class_probs: &[f64], box_confidence: f64) -> Vec<f64> {
    class_probs.iter().map(|p| p * box_confidence).collect()
}

/// Keep exactly the detections scoring at or above `threshold`, in order.
pub fn filter_by_score(detections: &[ScoredDetection], threshold: f64) -> Vec<ScoredDetection> {
    detections
        .iter()
        .filter(|d| d.score >= threshold)
        .copied()
        .collect()
}

/// Greedy per-class non-max suppression.
///
/// Per category independently: repeatedly keep the highest-score survivor
/// (score ties fall back to input order) and suppress every same-category
/// detection overlapping it with IOU strictly above `iou_threshold`.
/// Detections of different categories never suppress each other. Output is
/// sorted by descending score, ties by input order.
pub fn nms(detections: &[ScoredDetection], iou_threshold: f64) -> Vec<ScoredDetection> {
    // Indices sorted by (score desc, input order asc); a stable sort keeps
    // equal scores in input order.
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .partial_cmp(&detections[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut suppressed = vec![false; detections.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j]
                && detections[j].category == detections[i].category
                && iou(&detections[j].box_, &detections[i].box_) > iou_threshold
            {
                suppressed[j] = true;
            }
        }
    }
    kept.into_iter().map(|i| detections[i]).collect()
}

/// Full pipeline: decode, score every (predictor, class) pair, filter, NMS.
///
/// Candidates are flattened cell-major, then by predictor slot, then by
/// class, so the whole pipeline is deterministic.
pub fn detect(
    tensor: &DetectionTensor,
    config: &PostprocessConfig,
) -> Result<Vec<ScoredDetection>, CodecError> {
    let cells = decode(tensor)?;
    let mut candidates = Vec::new();
    for cell in &cells {
        for (box_, confidence) in &cell.predictors {
            for (category, score) in class_confidence(&cell.class_probs, *confidence)
                .into_iter()
                .enumerate()
            {
                candidates.push(ScoredDetection {
                    box_: *box_,
                    category,
                    score,
                });
            }
        }
    }
    let surviving = filter_by_score(&candidates, config.score_threshold);
    Ok(nms(&surviving, config.nms_iou_threshold))
}

/// One detection per line: `{"class":int,"score":float,"box":[x,y,w,h]}`.
pub fn detections_to_json_lines(detections: &[ScoredDetection]) -> String {
    #[derive(Serialize)]
    struct Line {
        class: usize,
        score: f64,
        #[serde(rename = "box")]
        box_: [f64; 4],
    }
    detections
        .iter()
        .map(|d| {
            serde_json::to_string(&Line {
                class: d.category,
                score: d.score,
                box_: [d.box_.x, d.box_.y, d.box_.w, d.box_.h],
            })
            .expect("detection serialization cannot fail")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::gridcodec::{encode, GridConfig, GroundTruthObject};

    fn det(x: f64, y: f64, w: f64, h: f64, category: usize, score: f64) -> ScoredDetection {
        ScoredDetection {
            box_: BoundingBox { x, y, w, h },
            category,
            score,
        }
    }

    #[test]
    fn class_confidence_examples() {
        assert_eq!(class_confidence(&[1.0, 0.0], 0.5), vec![0.5, 0.0]);
        assert_eq!(class_confidence(&[0.8, 0.2], 0.0), vec![0.0, 0.0]);
        let scores = class_confidence(&[0.8, 0.2], 0.5);
        assert!((scores[0] - 0.4).abs() < 1e-12 && (scores[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn filter_keeps_boundary_scores() {
        let input = vec![
            det(0.5, 0.5, 0.1, 0.1, 0, 0.1),
            det(0.5, 0.5, 0.1, 0.1, 0, 0.2),
            det(0.5, 0.5, 0.1, 0.1, 0, 0.3),
        ];
        assert_eq!(filter_by_score(&input, 0.0), input);
        assert!(filter_by_score(&input, 1.01).is_empty());
        let kept = filter_by_score(&input, 0.2);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].score, 0.2);
        assert_eq!(kept[1].score, 0.3);
    }

    #[test]
    fn nms_single_detection_passes_through() {
        let d = det(0.5, 0.5, 0.2, 0.2, 0, 0.9);
        assert_eq!(nms(&[d], 0.5), vec![d]);
    }

    #[test]
    fn nms_suppresses_duplicate_of_same_class() {
        let hi = det(0.5, 0.5, 0.2, 0.2, 0, 0.9);
        let lo = det(0.5, 0.5, 0.2, 0.2, 0, 0.8);
        assert_eq!(nms(&[lo, hi], 0.5), vec![hi]);
    }

    #[test]
    fn nms_keeps_identical_boxes_of_different_classes() {
        let a = det(0.5, 0.5, 0.2, 0.2, 0, 0.9);
        let b = det(0.5, 0.5, 0.2, 0.2, 1, 0.8);
        assert_eq!(nms(&[b, a], 0.5), vec![a, b]);
    }

    #[test]
    fn nms_score_tie_falls_back_to_input_order() {
        let first = det(0.2, 0.2, 0.1, 0.1, 0, 0.7);
        let second = det(0.8, 0.8, 0.1, 0.1, 0, 0.7);
        assert_eq!(nms(&[first, second], 0.5), vec![first, second]);
    }

    #[test]
    fn detect_on_zero_tensor_is_empty() {
        let tensor = DetectionTensor::zeros(GridConfig::default());
        assert!(detect(&tensor, &PostprocessConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn detect_recovers_single_encoded_object() {
        let cfg = GridConfig::default();
        let obj = GroundTruthObject {
            box_: BoundingBox { x: 0.4, y: 0.6, w: 0.2, h: 0.3 },
            category: 7,
        };
        let tensor = encode(&[obj], &cfg).unwrap();
        let found = detect(&tensor, &PostprocessConfig::default()).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].category, 7);
        assert_eq!(found[0].score, 1.0);
        assert!((found[0].box_.x - 0.4).abs() < 1e-12);
        assert!((found[0].box_.y - 0.6).abs() < 1e-12);
    }

    #[test]
    fn detect_two_separated_objects() {
        // Hand-walked: both cells emit one scoring candidate each (score
        // 1.0 for the true class, 0 elsewhere); the filter leaves exactly
        // two detections and NMS keeps both since their IOU is 0.
        let cfg = GridConfig::new(4, 2, 2).unwrap();
        let a = GroundTruthObject {
            box_: BoundingBox { x: 0.25, y: 0.25, w: 0.2, h: 0.2 },
            category: 0,
        };
        let b = GroundTruthObject {
            box_: BoundingBox { x: 0.75, y: 0.75, w: 0.2, h: 0.2 },
            category: 1,
        };
        let tensor = encode(&[a, b], &cfg).unwrap();
        let found = detect(&tensor, &PostprocessConfig::default()).unwrap();
        assert_eq!(found.len(), 2);
        let mut classes: Vec<usize> = found.iter().map(|d| d.category).collect();
        classes.sort_unstable();
        assert_eq!(classes, vec![0, 1]);
        assert!(found.iter().all(|d| d.score == 1.0));
    }

    #[test]
    fn json_lines_format() {
        let lines = detections_to_json_lines(&[det(0.5, 0.5, 0.25, 0.25, 3, 0.75)]);
        assert_eq!(
            lines,
            r#"{"class":3,"score":0.75,"box":[0.5,0.5,0.25,0.25]}"#
        );
    }
}
