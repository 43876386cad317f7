//! Independent oracles and seeded self-check suites.
//!
//! Each suite checks a production algorithm against a second route that
//! shares none of its code: IOU against discrete cell counting on a pixel
//! grid, greedy NMS against a naive repeated-scan simulation, and the
//! analytic loss gradient against central finite differences. The suites
//! back both the test batteries and the `selfcheck` CLI command, and take
//! the function under test as a parameter so a deliberately broken variant
//! is detected (and a correct one accepted) by construction.

use crate::geometry::{iou, BoundingBox, ScoredDetection};
use crate::gridcodec::{encode, DetectionTensor, GridConfig, GroundTruthObject};
use crate::loss::{
    loss_given, loss_gradient_given, resolve_assignments, Assignments, LossError, LossWeights,
};
use crate::postprocess;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Seed used by the CLI when none is given.
pub const DEFAULT_SEED: u64 = 42;

/// Grid resolution for the random-pair rasterization checks. Cell-counting
/// error scales with box perimeter over resolution; 8000 keeps it below the
/// 2e-3 agreement tolerance for boxes at least 0.1 wide.
pub const RASTER_RESOLUTION: usize = 8000;

/// Absolute agreement tolerance between analytic IOU and the raster oracle.
pub const RASTER_TOLERANCE: f64 = 2e-3;

/// Central-difference step for the gradient suite.
pub const FD_STEP: f64 = 1e-5;

/// Per-entry relative tolerance for the gradient suite.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
#[error("suite '{suite}' failed: {detail}")]
pub struct SuiteFailure {
    pub suite: &'static str,
    pub detail: String,
}

fn suite_fail(suite: &'static str, detail: String) -> SuiteFailure {
    SuiteFailure { suite, detail }
}

// ---------------------------------------------------------------------------
// IOU: rasterization oracle
// ---------------------------------------------------------------------------

/// IOU measured by counting grid cells whose centers fall inside each box.
///
/// Membership is evaluated per axis with an explicit scan (a cell belongs to
/// a box iff its center is inside both the x and y extents), so the oracle
/// never touches the analytic intersection formula.
pub fn iou_rasterized(a: &BoundingBox, b: &BoundingBox, resolution: usize) -> f64 {
    let (al, at, ar, ab) = a.to_corner_form();
    let (bl, bt, br, bb) = b.to_corner_form();

    let centers = |lo: f64, hi: f64| -> Vec<bool> {
        (0..resolution)
            .map(|i| {
                let c = (i as f64 + 0.5) / resolution as f64;
                lo <= c && c <= hi
            })
            .collect()
    };
    let ax = centers(al, ar);
    let bx = centers(bl, br);

    let mut in_a_row = 0usize;
    let mut in_b_row = 0usize;
    let mut in_both_row = 0usize;
    for i in 0..resolution {
        in_a_row += ax[i] as usize;
        in_b_row += bx[i] as usize;
        in_both_row += (ax[i] && bx[i]) as usize;
    }

    let mut cells_a = 0usize;
    let mut cells_b = 0usize;
    let mut cells_inter = 0usize;
    for j in 0..resolution {
        let c = (j as f64 + 0.5) / resolution as f64;
        let ya = at <= c && c <= ab;
        let yb = bt <= c && c <= bb;
        if ya {
            cells_a += in_a_row;
        }
        if yb {
            cells_b += in_b_row;
        }
        if ya && yb {
            cells_inter += in_both_row;
        }
    }

    let union = cells_a + cells_b - cells_inter;
    if union == 0 {
        0.0
    } else {
        cells_inter as f64 / union as f64
    }
}

/// Random box fully inside the unit square with extents at least `min_wh`.
fn random_box(rng: &mut impl Rng, min_wh: f64) -> BoundingBox {
    let w = rng.gen_range(min_wh..=1.0);
    let h = rng.gen_range(min_wh..=1.0);
    let x = rng.gen_range(w / 2.0..=1.0 - w / 2.0);
    let y = rng.gen_range(h / 2.0..=1.0 - h / 2.0);
    BoundingBox { x, y, w, h }
}

/// Symmetry, range, and identity on `pairs` random pairs, plus raster-oracle
/// agreement on the same number of pairs.
pub fn run_iou_suite(seed: u64, pairs: usize) -> Result<(), SuiteFailure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for i in 0..pairs {
        let a = random_box(&mut rng, 0.0);
        let b = random_box(&mut rng, 0.0);
        let ab = iou(&a, &b);
        let ba = iou(&b, &a);
        if ab != ba {
            return Err(suite_fail(
                "iou",
                format!("pair {i}: iou not symmetric ({ab} vs {ba})"),
            ));
        }
        if !(0.0..=1.0).contains(&ab) {
            return Err(suite_fail("iou", format!("pair {i}: iou {ab} outside [0, 1]")));
        }
        if a.area() > 0.0 && iou(&a, &a) != 1.0 {
            return Err(suite_fail(
                "iou",
                format!("pair {i}: iou(a, a) = {} for positive-area box", iou(&a, &a)),
            ));
        }
    }

    for i in 0..pairs {
        let a = random_box(&mut rng, 0.1);
        let b = random_box(&mut rng, 0.1);
        let analytic = iou(&a, &b);
        let raster = iou_rasterized(&a, &b, RASTER_RESOLUTION);
        if (analytic - raster).abs() > RASTER_TOLERANCE {
            return Err(suite_fail(
                "iou",
                format!(
                    "pair {i}: analytic {analytic} vs rasterized {raster} \
                     (|diff| > {RASTER_TOLERANCE})"
                ),
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// NMS: brute-force greedy oracle
// ---------------------------------------------------------------------------

/// Naive greedy suppression: repeatedly scan the whole remaining list for
/// the best survivor (highest score, earliest input position on ties) and
/// drop every same-category detection overlapping it too much. Quadratic
/// and list-based; fine for oracle-sized inputs.
pub fn nms_reference(detections: &[ScoredDetection], iou_threshold: f64) -> Vec<ScoredDetection> {
    let mut remaining: Vec<(usize, ScoredDetection)> =
        detections.iter().copied().enumerate().collect();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (best_idx, best_det) = remaining[best];
            let (idx, det) = remaining[i];
            if det.score > best_det.score || (det.score == best_det.score && idx < best_idx) {
                best = i;
            }
        }
        let (_, chosen) = remaining.remove(best);
        kept.push(chosen);
        remaining.retain(|(_, d)| {
            d.category != chosen.category || iou(&d.box_, &chosen.box_) <= iou_threshold
        });
    }
    kept
}

fn random_detections(rng: &mut impl Rng, max_boxes: usize, classes: usize) -> Vec<ScoredDetection> {
    let n = rng.gen_range(0..=max_boxes);
    (0..n)
        .map(|_| {
            let w = rng.gen_range(0.05..0.5);
            let h = rng.gen_range(0.05..0.5);
            // Quantized scores half the time so ties actually occur.
            let score = if rng.gen_bool(0.5) {
                rng.gen_range(0..=10) as f64 / 10.0
            } else {
                rng.gen_range(0.0..=1.0)
            };
            ScoredDetection {
                box_: BoundingBox {
                    x: rng.gen_range(w / 2.0..=1.0 - w / 2.0),
                    y: rng.gen_range(h / 2.0..=1.0 - h / 2.0),
                    w,
                    h,
                },
                category: rng.gen_range(0..classes),
                score,
            }
        })
        .collect()
}

/// Run the NMS oracle suite against an arbitrary suppression function.
pub fn run_nms_suite_with(
    seed: u64,
    instances: usize,
    nms_fn: impl Fn(&[ScoredDetection], f64) -> Vec<ScoredDetection>,
) -> Result<(), SuiteFailure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..instances {
        let detections = random_detections(&mut rng, 10, 2);
        let threshold = rng.gen_range(0.1..0.9);
        let actual = nms_fn(&detections, threshold);
        let expected = nms_reference(&detections, threshold);
        if actual != expected {
            return Err(suite_fail(
                "nms",
                format!(
                    "instance {i} ({} boxes, threshold {threshold:.3}): \
                     kept {} detections, oracle kept {}",
                    detections.len(),
                    actual.len(),
                    expected.len()
                ),
            ));
        }

        // Antichain: no two same-category survivors overlap above threshold.
        for (m, a) in actual.iter().enumerate() {
            for b in &actual[m + 1..] {
                if a.category == b.category && iou(&a.box_, &b.box_) > threshold {
                    return Err(suite_fail(
                        "nms",
                        format!("instance {i}: output violates the antichain property"),
                    ));
                }
            }
        }
        // Dominance: everything suppressed overlaps a kept detection of
        // equal or higher score in its category.
        for d in &detections {
            if actual.contains(d) {
                continue;
            }
            let dominated = actual.iter().any(|k| {
                k.category == d.category
                    && k.score >= d.score
                    && iou(&k.box_, &d.box_) > threshold
            });
            if !dominated {
                return Err(suite_fail(
                    "nms",
                    format!("instance {i}: suppressed detection lacks a dominating survivor"),
                ));
            }
        }
    }
    Ok(())
}

/// NMS oracle suite against the production implementation.
pub fn run_nms_suite(seed: u64, instances: usize) -> Result<(), SuiteFailure> {
    run_nms_suite_with(seed, instances, postprocess::nms)
}

// ---------------------------------------------------------------------------
// Loss gradient: finite-difference oracle
// ---------------------------------------------------------------------------

/// Central finite differences of [`loss_given`] at frozen assignments.
pub fn finite_difference_gradient(
    prediction: &DetectionTensor,
    target: &DetectionTensor,
    assignments: &Assignments,
    weights: &LossWeights,
    step: f64,
) -> Result<Vec<f64>, LossError> {
    let mut grad = vec![0.0; prediction.values.len()];
    let mut work = prediction.clone();
    for i in 0..prediction.values.len() {
        let original = prediction.values[i];
        work.values[i] = original + step;
        let plus = loss_given(&work, target, assignments, weights)?.total;
        work.values[i] = original - step;
        let minus = loss_given(&work, target, assignments, weights)?.total;
        work.values[i] = original;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Random prediction/target pair with extents bounded into `[0.1, 1]` so
/// the square-root terms stay away from their singularity.
pub fn random_loss_instance(rng: &mut impl Rng) -> (DetectionTensor, DetectionTensor) {
    let config = GridConfig::new(
        rng.gen_range(1..=4),
        rng.gen_range(1..=2),
        rng.gen_range(1..=3),
    )
    .expect("dimensions are positive");

    let object_count = rng.gen_range(1..=config.s.min(3));
    let mut cells: Vec<usize> = (0..config.s * config.s).collect();
    let mut objects = Vec::with_capacity(object_count);
    for _ in 0..object_count {
        let pick = rng.gen_range(0..cells.len());
        let cell = cells.swap_remove(pick);
        let (row, col) = (cell / config.s, cell % config.s);
        let s = config.s as f64;
        objects.push(GroundTruthObject {
            box_: BoundingBox {
                x: (col as f64 + rng.gen_range(0.05..0.95)) / s,
                y: (row as f64 + rng.gen_range(0.05..0.95)) / s,
                w: rng.gen_range(0.1..=1.0),
                h: rng.gen_range(0.1..=1.0),
            },
            category: rng.gen_range(0..config.c),
        });
    }
    let target = encode(&objects, &config).expect("cells are distinct");

    let mut prediction = DetectionTensor::zeros(config);
    for row in 0..config.s {
        for col in 0..config.s {
            let base = prediction.cell_base(row, col);
            for slot in 0..config.b {
                prediction.values[base + 5 * slot] = rng.gen_range(0.0..1.0);
                prediction.values[base + 5 * slot + 1] = rng.gen_range(0.0..1.0);
                prediction.values[base + 5 * slot + 2] = rng.gen_range(0.1..=1.0);
                prediction.values[base + 5 * slot + 3] = rng.gen_range(0.1..=1.0);
                prediction.values[base + 5 * slot + 4] = rng.gen_range(0.0..=1.0);
            }
            for c in 0..config.c {
                prediction.values[base + 5 * config.b + c] = rng.gen_range(0.0..=1.0);
            }
        }
    }
    (prediction, target)
}

/// Run the gradient suite against an arbitrary gradient function.
pub fn run_gradient_suite_with(
    seed: u64,
    instances: usize,
    grad_fn: impl Fn(
        &DetectionTensor,
        &DetectionTensor,
        &Assignments,
        &LossWeights,
    ) -> Result<DetectionTensor, LossError>,
) -> Result<(), SuiteFailure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = LossWeights::default();
    for i in 0..instances {
        let (prediction, target) = random_loss_instance(&mut rng);
        let assignments = resolve_assignments(&prediction, &target)
            .map_err(|e| suite_fail("gradient", format!("instance {i}: {e}")))?;
        let analytic = grad_fn(&prediction, &target, &assignments, &weights)
            .map_err(|e| suite_fail("gradient", format!("instance {i}: {e}")))?;
        let numeric =
            finite_difference_gradient(&prediction, &target, &assignments, &weights, FD_STEP)
                .map_err(|e| suite_fail("gradient", format!("instance {i}: {e}")))?;

        for (entry, (&a, &n)) in analytic.values.iter().zip(&numeric).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1.0);
            if rel >= GRADIENT_TOLERANCE {
                return Err(suite_fail(
                    "gradient",
                    format!(
                        "instance {i} entry {entry}: analytic {a} vs finite difference {n} \
                         (relative error {rel:.2e})"
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Gradient suite against the production analytic gradient.
pub fn run_gradient_suite(seed: u64, instances: usize) -> Result<(), SuiteFailure> {
    run_gradient_suite_with(seed, instances, |p, t, a, w| loss_gradient_given(p, t, a, w))
}
