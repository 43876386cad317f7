//! Property tests for the spec-level invariants: IOU symmetry/range and
//! oracle agreement, corner-form and codec round trips, NMS output laws,
//! loss decomposition and weight scaling, projection shrinkage, and the
//! majority rule's monotonicity.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trafficdet_core::geometry::{iou, BoundingBox, ScoredDetection};
use trafficdet_core::gridcodec::{decode, encode, responsible_cell, GridConfig, GroundTruthObject};
use trafficdet_core::loss::{yolo_loss, LossWeights};
use trafficdet_core::postprocess::{filter_by_score, nms};
use trafficdet_core::scenegen::{project, Lane, SceneConfig, SceneObject};
use trafficdet_core::selfcheck::{
    iou_rasterized, nms_reference, random_loss_instance, RASTER_RESOLUTION, RASTER_TOLERANCE,
};
use trafficdet_core::evaldata::{majority_final_result, PhotoOutcome};

/// Arbitrary box inside the unit square (degenerate extents allowed).
fn unit_box() -> impl Strategy<Value = BoundingBox> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(x, y, wf, hf)| {
        BoundingBox {
            x,
            y,
            w: wf * 2.0 * x.min(1.0 - x),
            h: hf * 2.0 * y.min(1.0 - y),
        }
    })
}

/// Box at least 0.1 wide and tall: the cell-counting error of the raster
/// oracle stays inside the agreement tolerance for these.
fn chunky_box() -> impl Strategy<Value = BoundingBox> {
    (0.1f64..=1.0, 0.1f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(w, h, xf, yf)| {
        BoundingBox {
            x: w / 2.0 + (1.0 - w) * xf,
            y: h / 2.0 + (1.0 - h) * yf,
            w,
            h,
        }
    })
}

/// Box whose corner coordinates are exactly representable (all fields are
/// multiples of 1/128), so the corner-form round trip is lossless.
fn dyadic_box() -> impl Strategy<Value = BoundingBox> {
    (0u32..=64, 0u32..=64, 0u32..=64, 0u32..=64).prop_map(|(xi, yi, wi, hi)| {
        let w = wi.min(2 * xi.min(64 - xi));
        let h = hi.min(2 * yi.min(64 - yi));
        BoundingBox {
            x: xi as f64 / 64.0,
            y: yi as f64 / 64.0,
            w: w as f64 / 64.0,
            h: h as f64 / 64.0,
        }
    })
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_in_range(a in unit_box(), b in unit_box()) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn iou_identity_for_positive_area(a in unit_box()) {
        prop_assume!(a.area() > 0.0);
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_agrees_with_raster_oracle(a in chunky_box(), b in chunky_box()) {
        let raster = iou_rasterized(&a, &b, RASTER_RESOLUTION);
        prop_assert!((iou(&a, &b) - raster).abs() <= RASTER_TOLERANCE);
    }

    #[test]
    fn corner_form_round_trip_is_exact(b in dyadic_box()) {
        let (l, t, r, bo) = b.to_corner_form();
        let back = BoundingBox::from_corner_form(l, t, r, bo);
        prop_assert_eq!(back, b);
    }
}

/// Conflict-free object set over a random grid configuration.
fn codec_instance() -> impl Strategy<Value = (GridConfig, Vec<GroundTruthObject>)> {
    (1usize..=7, 1usize..=3, 1usize..=5).prop_flat_map(|(s, b, c)| {
        let cells = s * s;
        (
            Just((s, b, c)),
            proptest::collection::vec(
                (
                    0..cells,
                    0.02f64..0.98,
                    0.02f64..0.98,
                    0.0f64..=1.0,
                    0.0f64..=1.0,
                    0..c,
                ),
                0..=cells.min(6),
            ),
        )
    })
    .prop_map(|((s, b, c), raw)| {
        let config = GridConfig::new(s, b, c).unwrap();
        let mut used = vec![false; s * s];
        let mut objects = Vec::new();
        for (cell, fx, fy, w, h, category) in raw {
            if used[cell] {
                continue;
            }
            used[cell] = true;
            let (row, col) = (cell / s, cell % s);
            objects.push(GroundTruthObject {
                box_: BoundingBox {
                    x: (col as f64 + fx) / s as f64,
                    y: (row as f64 + fy) / s as f64,
                    w,
                    h,
                },
                category,
            });
        }
        (config, objects)
    })
}

proptest! {
    #[test]
    fn codec_round_trip((config, objects) in codec_instance()) {
        let tensor = encode(&objects, &config).unwrap();
        prop_assert_eq!(tensor.values.len(), config.tensor_len());

        let cells = decode(&tensor).unwrap();
        for obj in &objects {
            let (row, col) = responsible_cell(&obj.box_, &config).unwrap();

            // Encoded offsets stay in [0, 1).
            let stored = tensor.predictor(row, col, 0);
            prop_assert!((0.0..1.0).contains(&stored[0]));
            prop_assert!((0.0..1.0).contains(&stored[1]));
            prop_assert_eq!(stored[4], 1.0);

            let cell = &cells[row * config.s + col];
            let (decoded, conf) = cell.predictors[0];
            prop_assert_eq!(conf, 1.0);
            prop_assert!((decoded.x - obj.box_.x).abs() < 1e-12);
            prop_assert!((decoded.y - obj.box_.y).abs() < 1e-12);
            prop_assert_eq!(decoded.w, obj.box_.w);
            prop_assert_eq!(decoded.h, obj.box_.h);

            // The decoded box lands back in the cell it was stored in.
            prop_assert_eq!(responsible_cell(&decoded, &config).unwrap(), (row, col));

            // One-hot class vector.
            let probs = cell.class_probs.clone();
            prop_assert_eq!(probs[obj.category], 1.0);
            prop_assert_eq!(probs.iter().sum::<f64>(), 1.0);
        }
    }
}

/// Random NMS input: up to 10 boxes, two categories, tie-prone scores.
fn nms_instance() -> impl Strategy<Value = (Vec<ScoredDetection>, f64)> {
    let detection = (
        0.05f64..0.5,
        0.05f64..0.5,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0usize..2,
        0u32..=10,
        any::<bool>(),
        0.0f64..=1.0,
    )
        .prop_map(|(w, h, xf, yf, category, tick, quantize, raw)| ScoredDetection {
            box_: BoundingBox {
                x: w / 2.0 + (1.0 - w) * xf,
                y: h / 2.0 + (1.0 - h) * yf,
                w,
                h,
            },
            category,
            score: if quantize { tick as f64 / 10.0 } else { raw },
        });
    (
        proptest::collection::vec(detection, 0..=10),
        0.05f64..0.95,
    )
}

proptest! {
    #[test]
    fn nms_matches_oracle_and_output_laws((detections, threshold) in nms_instance()) {
        let kept = nms(&detections, threshold);

        // Deterministic.
        prop_assert_eq!(&kept, &nms(&detections, threshold));
        // Brute-force greedy oracle agreement.
        prop_assert_eq!(&kept, &nms_reference(&detections, threshold));

        // Antichain within each category.
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                if a.category == b.category {
                    prop_assert!(iou(&a.box_, &b.box_) <= threshold);
                }
            }
        }
        // Sorted by descending score.
        for pair in kept.windows(2) {
            prop_assert!(pair[0].score >= pair[1].score);
        }
        // Every suppressed detection is dominated by a kept one.
        for d in &detections {
            if !kept.contains(d) {
                prop_assert!(kept.iter().any(|k| k.category == d.category
                    && k.score >= d.score
                    && iou(&k.box_, &d.box_) > threshold));
            }
        }
    }

    #[test]
    fn raising_score_threshold_never_adds_detections(
        (detections, _) in nms_instance(),
        lo in 0.0f64..=1.0,
        hi in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let kept_lo = filter_by_score(&detections, lo);
        let kept_hi = filter_by_score(&detections, hi);
        prop_assert!(kept_hi.len() <= kept_lo.len());
        for d in &kept_hi {
            prop_assert!(kept_lo.contains(d));
        }
    }
}

proptest! {
    #[test]
    fn loss_decomposes_and_scales(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (prediction, target) = random_loss_instance(&mut rng);

        let weights = LossWeights::default();
        let loss = yolo_loss(&prediction, &target, &weights).unwrap();

        // Every part nonnegative, total equals the sum of the parts.
        for part in [
            loss.coord_xy,
            loss.coord_wh,
            loss.conf_obj,
            loss.conf_noobj,
            loss.classification,
        ] {
            prop_assert!(part >= 0.0);
        }
        let sum = loss.coord_xy + loss.coord_wh + loss.conf_obj + loss.conf_noobj
            + loss.classification;
        prop_assert!((loss.total - sum).abs() <= 1e-12);

        // Doubling lambda_coord exactly doubles the coordinate terms and
        // leaves every other part untouched.
        let doubled = LossWeights { lambda_coord: 2.0 * weights.lambda_coord, ..weights };
        let scaled = yolo_loss(&prediction, &target, &doubled).unwrap();
        prop_assert_eq!(scaled.coord_xy, 2.0 * loss.coord_xy);
        prop_assert_eq!(scaled.coord_wh, 2.0 * loss.coord_wh);
        prop_assert_eq!(scaled.conf_obj, loss.conf_obj);
        prop_assert_eq!(scaled.conf_noobj, loss.conf_noobj);
        prop_assert_eq!(scaled.classification, loss.classification);
    }
}

proptest! {
    #[test]
    fn projected_area_shrinks_with_distance(
        near in 30.0f64..150.0,
        gap in 1.0f64..150.0,
    ) {
        let person = SceneObject::person(Lane::Middle, 0.0);
        let close = project(&person, &SceneConfig::at_distance(near)).unwrap();
        let far = project(&person, &SceneConfig::at_distance(near + gap)).unwrap();
        // Middle-lane person is fully in frame from 30 ft on, so no clipping
        // interferes with the strict shrinkage.
        prop_assert!(far.area() < close.area());
    }

    #[test]
    fn majority_rule_is_monotone(a in any::<bool>(), b in any::<bool>(), c in any::<bool>(), flip in 0usize..3) {
        let mk = |marks: [bool; 3]| -> Vec<PhotoOutcome> {
            marks.into_iter().map(PhotoOutcome::person_only).collect()
        };
        let mut marks = [a, b, c];
        let before = majority_final_result(&mk(marks)).unwrap();
        marks[flip] = true;
        let after = majority_final_result(&mk(marks)).unwrap();
        prop_assert!(!(before && !after));
    }
}
