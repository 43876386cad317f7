//! The five commands behind the binary, as plain functions over records and
//! constants so tests can drive them with fixture data and capture output.

use crate::config::Constants;
use serde::Serialize;
use thiserror::Error;
use trafficdet_core::evaldata::{
    self, experiment_report, figure6_report, validate_dataset, SuccessRateReport, TrialRecord,
};
use trafficdet_core::geometry::{iou, BoundingBox, ScoredDetection};
use trafficdet_core::gridcodec::{encode, CodecError, GroundTruthObject};
use trafficdet_core::postprocess::detect;
use trafficdet_core::scenegen::{
    build_layout_with_sizes, project, Lane, ObjectKind, SceneConfig, SceneObject,
};
use trafficdet_core::selfcheck;

/// Exit status contract: success 0, failed check 1, usage error 2.
pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Error, PartialEq)]
pub enum CommandError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Check(String),
}

impl CommandError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CommandError::Usage(_) => EXIT_USAGE,
            CommandError::Check(_) => EXIT_CHECK_FAILED,
        }
    }
}

fn usage(msg: impl Into<String>) -> CommandError {
    CommandError::Usage(msg.into())
}

fn require_experiment(experiment: u8) -> Result<(), CommandError> {
    if (1..=4).contains(&experiment) {
        Ok(())
    } else {
        Err(usage(format!("experiment must be 1-4, got {experiment}")))
    }
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

/// Run every dataset invariant; the summary names what was established.
pub fn cmd_validate(records: &[TrialRecord]) -> Result<String, CommandError> {
    let summary = validate_dataset(records)
        .map_err(|failure| CommandError::Check(format!("validation FAILED: {failure}")))?;
    let mut out = String::new();
    out.push_str(&format!("photos={}\n", summary.photos));
    out.push_str(&format!(
        "trials: exp1={} exp2={} exp3={} exp4={}\n",
        summary.trials[0], summary.trials[1], summary.trials[2], summary.trials[3]
    ));
    out.push_str(&format!("checks passed: {}\n", summary.checks_run.join(", ")));
    out.push_str("validation OK\n");
    Ok(out)
}

// ---------------------------------------------------------------------------
// rates / figure6
// ---------------------------------------------------------------------------

const RATES_CSV_HEADER: &str = "experiment,distance_ft,passes,total,rate_pct";

fn rates_csv(reports: &[&SuccessRateReport]) -> String {
    let mut out = String::from(RATES_CSV_HEADER);
    out.push('\n');
    for report in reports {
        for row in &report.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.2}\n",
                report.experiment_id, row.distance_ft, row.passes, row.total, row.rate_pct
            ));
        }
    }
    for report in reports {
        for note in &report.notes {
            out.push_str(&format!("# note: {note}\n"));
        }
    }
    out
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    text.push('\n');
    text
}

/// Per-distance success rates of one experiment.
pub fn cmd_rates(
    records: &[TrialRecord],
    experiment: u8,
    format: OutputFormat,
) -> Result<String, CommandError> {
    require_experiment(experiment)?;
    let report = experiment_report(records, experiment)
        .map_err(|e| CommandError::Check(e.to_string()))?;
    Ok(match format {
        OutputFormat::Csv => rates_csv(&[&report]),
        OutputFormat::Json => to_json(&report),
    })
}

/// Experiments 3 and 4 side by side, with discrepancy notes.
pub fn cmd_figure6(
    records: &[TrialRecord],
    format: OutputFormat,
) -> Result<String, CommandError> {
    let (exp3, exp4) =
        figure6_report(records).map_err(|e| CommandError::Check(e.to_string()))?;
    Ok(match format {
        OutputFormat::Csv => rates_csv(&[&exp3, &exp4]),
        OutputFormat::Json => to_json(&vec![exp3, exp4]),
    })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Class indices used when encoding simulated scenes.
pub fn kind_class(kind: ObjectKind) -> usize {
    match kind {
        ObjectKind::Person => 0,
        ObjectKind::Car => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedObject {
    pub kind: ObjectKind,
    pub lane: Lane,
    pub offset_ft: f64,
    #[serde(rename = "box")]
    pub box_: BoundingBox,
    /// Positive-area projection whose center can be assigned a grid cell.
    pub in_frame: bool,
    /// Whether the pipeline got this object back; `None` when the object
    /// was not encoded (out of frame, or the trial hit a cell conflict).
    pub recovered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedTrial {
    pub trial: usize,
    pub camera_distance_ft: u32,
    pub overlap: bool,
    /// Two objects landed in the same grid cell; the pipeline was skipped.
    pub encode_conflict: bool,
    pub objects: Vec<SimulatedObject>,
    pub detections: Vec<ScoredDetection>,
}

fn boxes_close(a: &BoundingBox, b: &BoundingBox) -> bool {
    (a.x - b.x).abs() < 1e-9
        && (a.y - b.y).abs() < 1e-9
        && (a.w - b.w).abs() < 1e-9
        && (a.h - b.h).abs() < 1e-9
}

/// Project every trial of an experiment at one camera distance and push the
/// in-frame ground truth through encode -> detect.
pub fn simulate_trials(
    experiment: u8,
    distance_ft: u32,
    constants: &Constants,
) -> Result<Vec<SimulatedTrial>, CommandError> {
    require_experiment(experiment)?;
    if constants.grid.c < 2 {
        return Err(usage("simulate needs grid_c >= 2 to tell persons from cars"));
    }
    let layout = build_layout_with_sizes(experiment, &constants.sizes)
        .map_err(|e| usage(e.to_string()))?;
    let trials = layout.trials_at(distance_ft as f64);
    if trials.is_empty() {
        return Err(usage(format!(
            "experiment {experiment} has no trials at {distance_ft} ft"
        )));
    }

    let scene = SceneConfig {
        camera_distance_ft: distance_ft as f64,
        focal_scale: constants.focal_scale,
        image_aspect: constants.image_aspect,
        lane_spacing_ft: constants.lane_spacing_ft,
    };

    let mut out = Vec::with_capacity(trials.len());
    for (index, trial) in trials.iter().enumerate() {
        let projected: Vec<(SceneObject, BoundingBox)> = trial
            .objects
            .iter()
            .map(|obj| project(obj, &scene).map(|b| (*obj, b)))
            .collect::<Result<_, _>>()
            .map_err(|e| usage(e.to_string()))?;

        let overlap = match projected.as_slice() {
            [(_, a), (_, b)] => iou(a, b) > 0.0,
            _ => false,
        };

        let in_frame = |b: &BoundingBox| {
            b.area() > 0.0 && (0.0..1.0).contains(&b.x) && (0.0..1.0).contains(&b.y)
        };
        let ground_truth: Vec<GroundTruthObject> = projected
            .iter()
            .filter(|(_, b)| in_frame(b))
            .map(|(obj, b)| GroundTruthObject {
                box_: *b,
                category: kind_class(obj.kind),
            })
            .collect();

        let (detections, encode_conflict) = match encode(&ground_truth, &constants.grid) {
            Ok(tensor) => {
                let found = detect(&tensor, &constants.post)
                    .map_err(|e| CommandError::Check(e.to_string()))?;
                (found, false)
            }
            Err(CodecError::CellConflict { .. }) => (Vec::new(), true),
            Err(other) => return Err(CommandError::Check(other.to_string())),
        };

        let objects = projected
            .into_iter()
            .map(|(obj, box_)| {
                let encodable = in_frame(&box_);
                let recovered = if encodable && !encode_conflict {
                    Some(detections.iter().any(|d| {
                        d.category == kind_class(obj.kind)
                            && d.score >= constants.post.score_threshold
                            && boxes_close(&d.box_, &box_)
                    }))
                } else {
                    None
                };
                SimulatedObject {
                    kind: obj.kind,
                    lane: obj.lane,
                    offset_ft: obj.offset_ft,
                    box_,
                    in_frame: encodable,
                    recovered,
                }
            })
            .collect();

        out.push(SimulatedTrial {
            trial: index,
            camera_distance_ft: distance_ft,
            overlap,
            encode_conflict,
            objects,
            detections,
        });
    }
    Ok(out)
}

const SIMULATE_CSV_HEADER: &str = "trial,camera_distance_ft,kind,lane,offset_ft,\
box_x,box_y,box_w,box_h,in_frame,overlap,recovered";

fn simulate_csv(trials: &[SimulatedTrial]) -> String {
    let mut out = String::from(SIMULATE_CSV_HEADER);
    out.push('\n');
    for t in trials {
        for o in &t.objects {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
                t.trial,
                t.camera_distance_ft,
                o.kind.name(),
                o.lane.name(),
                o.offset_ft,
                o.box_.x,
                o.box_.y,
                o.box_.w,
                o.box_.h,
                o.in_frame as u8,
                t.overlap as u8,
                match o.recovered {
                    Some(r) => (r as u8).to_string(),
                    None => String::new(),
                },
            ));
        }
    }
    out
}

/// Emit projected boxes, overlap flags, and pipeline results per trial.
pub fn cmd_simulate(
    experiment: u8,
    distance_ft: u32,
    format: OutputFormat,
    constants: &Constants,
) -> Result<String, CommandError> {
    let trials = simulate_trials(experiment, distance_ft, constants)?;
    Ok(match format {
        OutputFormat::Csv => simulate_csv(&trials),
        OutputFormat::Json => to_json(&trials),
    })
}

// ---------------------------------------------------------------------------
// selfcheck
// ---------------------------------------------------------------------------

pub const IOU_SUITE_PAIRS: usize = 1000;
pub const NMS_SUITE_INSTANCES: usize = 200;
pub const GRADIENT_SUITE_INSTANCES: usize = 20;

/// Run the three oracle suites with a fixed seed.
pub fn cmd_selfcheck(seed: u64) -> Result<String, CommandError> {
    let mut out = String::new();
    selfcheck::run_iou_suite(seed, IOU_SUITE_PAIRS)
        .map_err(|f| CommandError::Check(format!("selfcheck FAILED: {f}")))?;
    out.push_str(&format!("iou suite: ok ({IOU_SUITE_PAIRS} pairs)\n"));
    selfcheck::run_nms_suite(seed, NMS_SUITE_INSTANCES)
        .map_err(|f| CommandError::Check(format!("selfcheck FAILED: {f}")))?;
    out.push_str(&format!("nms suite: ok ({NMS_SUITE_INSTANCES} instances)\n"));
    selfcheck::run_gradient_suite(seed, GRADIENT_SUITE_INSTANCES)
        .map_err(|f| CommandError::Check(format!("selfcheck FAILED: {f}")))?;
    out.push_str(&format!(
        "gradient suite: ok ({GRADIENT_SUITE_INSTANCES} instances)\n"
    ));
    out.push_str(&format!("selfcheck OK (seed {seed})\n"));
    Ok(out)
}

/// The embedded dataset, re-exported so binary and tests share one source.
pub fn embedded_records() -> Vec<TrialRecord> {
    evaldata::embedded_dataset()
}
