//! The embedded benchmark: raw per-photo detection outcomes of the four
//! staged traffic-scene experiments, the majority final-result rule,
//! per-distance success rates, and the experiment 3 vs 4 comparison report.
//!
//! The transcription keeps the source tables' own glyphs (`√`/`✓` success,
//! `×` failure, `—` not measured) so it can be audited cell by cell.
//! Experiments 1 and 2 publish all three photos per position; experiments 3
//! and 4 publish only the aggregated final result per position pair, so
//! those records are stored pre-aggregated rather than as fabricated photo
//! triples. Where the dataset's reported headline rates disagree with what
//! its own tables add up to, the discrepancy is surfaced as a note, never
//! silently reconciled.

use crate::scenegen::{self, Lane, SceneConfig, SceneObject};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Outcome of a single photo. `None` means the target kind was not part of
/// the scene (or the per-target outcome was never published).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotoOutcome {
    pub detected_person: Option<bool>,
    pub detected_car: Option<bool>,
    /// Success means every applicable target was detected.
    pub success: bool,
}

impl PhotoOutcome {
    pub fn person_only(detected: bool) -> Self {
        PhotoOutcome {
            detected_person: Some(detected),
            detected_car: None,
            success: detected,
        }
    }

    pub fn car_only(detected: bool) -> Self {
        PhotoOutcome {
            detected_person: None,
            detected_car: Some(detected),
            success: detected,
        }
    }

    /// Published final result with no per-target breakdown.
    pub fn aggregated(success: bool) -> Self {
        PhotoOutcome {
            detected_person: None,
            detected_car: None,
            success,
        }
    }
}

/// Where an object stood: lane plus its offset in front of the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub lane: Lane,
    pub offset_ft: f64,
}

/// One position pair of an experiment with its detection outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment_id: u8,
    pub camera_distance_ft: u32,
    pub car: Option<Placement>,
    pub person: Option<Placement>,
    /// Three entries for per-photo records, one for pre-aggregated ones,
    /// empty for unmeasured cells.
    pub photos: Vec<PhotoOutcome>,
    /// False for the table cells marked `—`.
    pub measured: bool,
    /// True when the source published only the final result.
    pub pre_aggregated: bool,
}

impl TrialRecord {
    /// Photos shot for this record. Pre-aggregated trials were still shot
    /// three times per the protocol even though only the final result was
    /// published.
    pub fn photo_count(&self) -> usize {
        if !self.measured {
            0
        } else if self.pre_aggregated {
            3
        } else {
            self.photos.len()
        }
    }

    /// Final result: majority over three photos, the published value for
    /// pre-aggregated records, `None` for unmeasured cells.
    pub fn final_result(&self) -> Option<bool> {
        if !self.measured {
            None
        } else if self.pre_aggregated {
            Some(self.photos[0].success)
        } else {
            majority_final_result(&self.photos).ok()
        }
    }
}

/// Per-distance success counts of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRate {
    pub distance_ft: u32,
    pub passes: usize,
    pub total: usize,
    pub rate_pct: f64,
}

/// Success-rate rows of one experiment plus any discrepancy notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRateReport {
    #[serde(rename = "experiment")]
    pub experiment_id: u8,
    pub rows: Vec<DistanceRate>,
    pub notes: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("majority rule needs exactly 3 photos, got {0}")]
    WrongPhotoCount(usize),
    #[error("no measured records for experiment {experiment_id} at {camera_distance_ft} ft")]
    EmptySlice {
        experiment_id: u8,
        camera_distance_ft: u32,
    },
    #[error("record CSV line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// Majority rule over the three photos of one position pair.
pub fn majority_final_result(photos: &[PhotoOutcome]) -> Result<bool, EvalError> {
    if photos.len() != 3 {
        return Err(EvalError::WrongPhotoCount(photos.len()));
    }
    Ok(photos.iter().filter(|p| p.success).count() >= 2)
}

// ---------------------------------------------------------------------------
// Embedded transcription
// ---------------------------------------------------------------------------

const DISTANCES_NEAR: [u32; 6] = [10, 20, 30, 40, 50, 60];
const DISTANCES_FAR: [u32; 3] = [40, 50, 60];

/// Experiment 1, single person: per-lane photo marks at 10..60 ft.
const EXPERIMENT_1: [(Lane, [&str; 6]); 3] = [
    (Lane::Left, ["—", "√√×", "√√√", "√√√", "√√√", "×××"]),
    (Lane::Middle, ["√√√", "√√√", "√√√", "√√√", "√××", "×××"]),
    (Lane::Right, ["—", "√√√", "√√√", "√√√", "√√×", "√√√"]),
];

/// Experiment 2, single car: per-lane photo marks at 10..60 ft.
const EXPERIMENT_2: [(Lane, [&str; 6]); 3] = [
    (Lane::Left, ["√√√", "√√√", "√√√", "√√√", "√√√", "√√√"]),
    (Lane::Middle, ["√√√", "√√√", "√√√", "√√√", "√√√", "×√√"]),
    (Lane::Right, ["√√√", "√√√", "√√√", "√√√", "√√√", "√√√"]),
];

/// Experiment 3, person in the matrix vs car on the baseline. One row per
/// person position; the nine marks run car Left/Middle/Right, each at
/// 40/50/60 ft.
const EXPERIMENT_3: [(u32, Lane, &str); 9] = [
    (0, Lane::Left, "×××√√√√√×"),
    (0, Lane::Middle, "√√√×××√√×"),
    (0, Lane::Right, "√√×√×√×××"),
    (10, Lane::Left, "√√×√√√√√×"),
    (10, Lane::Middle, "√√××××√√√"),
    (10, Lane::Right, "√√×√√×√√×"),
    (20, Lane::Left, "√√√√√×√√√"),
    (20, Lane::Middle, "√√√×××√√√"),
    (20, Lane::Right, "√√√√√√√√√"),
];

/// Experiment 4, person on the baseline vs car in the matrix. One sub-table
/// per person lane; rows are (car offset, car lane, marks at 40/50/60 ft)
/// in the published row order.
const EXPERIMENT_4: [(Lane, [(u32, Lane, &str); 6]); 3] = [
    (
        Lane::Left,
        [
            (0, Lane::Middle, "√××"),
            (0, Lane::Right, "√×√"),
            (10, Lane::Middle, "√××"),
            (10, Lane::Right, "√√×"),
            (20, Lane::Middle, "√××"),
            (20, Lane::Right, "√√×"),
        ],
    ),
    (
        Lane::Middle,
        [
            (0, Lane::Left, "✓××"),
            (0, Lane::Right, "✓××"),
            (10, Lane::Left, "✓✓×"),
            (10, Lane::Right, "✓××"),
            (20, Lane::Left, "✓✓×"),
            (20, Lane::Right, "✓✓×"),
        ],
    ),
    (
        Lane::Right,
        [
            (0, Lane::Middle, "×××"),
            (0, Lane::Left, "✓××"),
            (10, Lane::Middle, "✓××"),
            (10, Lane::Left, "✓××"),
            (20, Lane::Middle, "✓✓✓"),
            (20, Lane::Left, "✓✓✓"),
        ],
    ),
];

/// `√` and `✓` both mean success; `×` means failure.
fn parse_mark(mark: char) -> bool {
    match mark {
        '√' | '✓' => true,
        '×' => false,
        other => panic!("unexpected table mark {other:?}"),
    }
}

fn parse_marks(marks: &str) -> Vec<bool> {
    marks.chars().map(parse_mark).collect()
}

fn baseline(lane: Lane) -> Placement {
    Placement {
        lane,
        offset_ft: 0.0,
    }
}

/// The full transcribed dataset, including the unmeasured experiment 1
/// cells (kept with `measured = false` and excluded from every total).
pub fn embedded_dataset() -> Vec<TrialRecord> {
    let mut records = Vec::with_capacity(16 + 18 + 81 + 54 + 2);

    for (lane, cells) in EXPERIMENT_1 {
        for (distance, marks) in DISTANCES_NEAR.iter().zip(cells) {
            let measured = marks != "—";
            records.push(TrialRecord {
                experiment_id: 1,
                camera_distance_ft: *distance,
                car: None,
                person: Some(baseline(lane)),
                photos: if measured {
                    parse_marks(marks)
                        .into_iter()
                        .map(PhotoOutcome::person_only)
                        .collect()
                } else {
                    Vec::new()
                },
                measured,
                pre_aggregated: false,
            });
        }
    }

    for (lane, cells) in EXPERIMENT_2 {
        for (distance, marks) in DISTANCES_NEAR.iter().zip(cells) {
            records.push(TrialRecord {
                experiment_id: 2,
                camera_distance_ft: *distance,
                car: Some(baseline(lane)),
                person: None,
                photos: parse_marks(marks)
                    .into_iter()
                    .map(PhotoOutcome::car_only)
                    .collect(),
                measured: true,
                pre_aggregated: false,
            });
        }
    }

    for (person_offset, person_lane, marks) in EXPERIMENT_3 {
        let row = parse_marks(marks);
        for (car_index, car_lane) in Lane::ALL.into_iter().enumerate() {
            for (dist_index, distance) in DISTANCES_FAR.into_iter().enumerate() {
                records.push(TrialRecord {
                    experiment_id: 3,
                    camera_distance_ft: distance,
                    car: Some(baseline(car_lane)),
                    person: Some(Placement {
                        lane: person_lane,
                        offset_ft: person_offset as f64,
                    }),
                    photos: vec![PhotoOutcome::aggregated(row[3 * car_index + dist_index])],
                    measured: true,
                    pre_aggregated: true,
                });
            }
        }
    }

    for (person_lane, rows) in EXPERIMENT_4 {
        for (car_offset, car_lane, marks) in rows {
            let row = parse_marks(marks);
            for (dist_index, distance) in DISTANCES_FAR.into_iter().enumerate() {
                records.push(TrialRecord {
                    experiment_id: 4,
                    camera_distance_ft: distance,
                    car: Some(Placement {
                        lane: car_lane,
                        offset_ft: car_offset as f64,
                    }),
                    person: Some(baseline(person_lane)),
                    photos: vec![PhotoOutcome::aggregated(row[dist_index])],
                    measured: true,
                    pre_aggregated: true,
                });
            }
        }
    }

    records
}

// ---------------------------------------------------------------------------
// Rates and reports
// ---------------------------------------------------------------------------

fn measured_slice<'a>(
    records: &'a [TrialRecord],
    experiment_id: u8,
    camera_distance_ft: u32,
) -> Vec<&'a TrialRecord> {
    records
        .iter()
        .filter(|r| {
            r.experiment_id == experiment_id
                && r.camera_distance_ft == camera_distance_ft
                && r.measured
        })
        .collect()
}

/// Success rate of one experiment at one camera distance. Unmeasured cells
/// never enter the denominator.
pub fn success_rate(
    records: &[TrialRecord],
    experiment_id: u8,
    camera_distance_ft: u32,
) -> Result<DistanceRate, EvalError> {
    let slice = measured_slice(records, experiment_id, camera_distance_ft);
    if slice.is_empty() {
        return Err(EvalError::EmptySlice {
            experiment_id,
            camera_distance_ft,
        });
    }
    let total = slice.len();
    let passes = slice
        .iter()
        .filter(|r| r.final_result() == Some(true))
        .count();
    Ok(DistanceRate {
        distance_ft: camera_distance_ft,
        passes,
        total,
        rate_pct: 100.0 * passes as f64 / total as f64,
    })
}

/// Sorted distances with measured records for an experiment.
pub fn measured_distances(records: &[TrialRecord], experiment_id: u8) -> Vec<u32> {
    let mut distances: Vec<u32> = records
        .iter()
        .filter(|r| r.experiment_id == experiment_id && r.measured)
        .map(|r| r.camera_distance_ft)
        .collect();
    distances.sort_unstable();
    distances.dedup();
    distances
}

/// Per-distance success-rate report for one experiment.
pub fn experiment_report(
    records: &[TrialRecord],
    experiment_id: u8,
) -> Result<SuccessRateReport, EvalError> {
    let rows = measured_distances(records, experiment_id)
        .into_iter()
        .map(|d| success_rate(records, experiment_id, d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SuccessRateReport {
        experiment_id,
        rows,
        notes: Vec::new(),
    })
}

/// Headline rates reported alongside the raw tables, for cross-checking.
/// The experiment 3 figures agree with the tables; the experiment 4 claims
/// of 100% at 40 ft and 33.33% at 50 ft do not.
const REPORTED_RATES: [(u8, u32, f64); 5] = [
    (3, 40, 81.48),
    (3, 50, 77.78),
    (3, 60, 44.4),
    (4, 40, 100.0),
    (4, 50, 33.33),
];

/// Tolerance for calling a table-derived rate consistent with a reported
/// one: covers rounding like 44.44% quoted as 44.4%.
pub const RATE_AGREEMENT_PCT: f64 = 0.05;

/// The experiment 3 vs 4 comparison: table-derived rates at 40/50/60 ft for
/// both experiments, with a note for every reported headline rate the
/// tables fail to back up.
pub fn figure6_report(
    records: &[TrialRecord],
) -> Result<(SuccessRateReport, SuccessRateReport), EvalError> {
    let mut reports = Vec::with_capacity(2);
    for experiment_id in [3u8, 4u8] {
        let rows = DISTANCES_FAR
            .iter()
            .map(|&d| success_rate(records, experiment_id, d))
            .collect::<Result<Vec<_>, _>>()?;
        let mut notes = Vec::new();
        for &(exp, distance, reported) in &REPORTED_RATES {
            if exp != experiment_id {
                continue;
            }
            let row = rows
                .iter()
                .find(|r| r.distance_ft == distance)
                .expect("reported rates cover only the 40/50/60 ft rows");
            if (row.rate_pct - reported).abs() > RATE_AGREEMENT_PCT {
                notes.push(format!(
                    "experiment {} at {} ft: tables give {}/{} = {:.2}%, reported as {}%",
                    exp, distance, row.passes, row.total, row.rate_pct, reported
                ));
            }
        }
        reports.push(SuccessRateReport {
            experiment_id,
            rows,
            notes,
        });
    }
    let exp4 = reports.pop().expect("two reports");
    let exp3 = reports.pop().expect("two reports");
    Ok((exp3, exp4))
}

// ---------------------------------------------------------------------------
// Dataset validation
// ---------------------------------------------------------------------------

/// A named failed integrity check.
#[derive(Debug, Error, PartialEq)]
#[error("check '{check}' failed: {detail}")]
pub struct ValidationFailure {
    pub check: &'static str,
    pub detail: String,
}

/// What a passing validation run established.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSummary {
    pub photos: usize,
    /// Measured trials per experiment 1..4.
    pub trials: [usize; 4],
    pub checks_run: Vec<&'static str>,
}

fn fail(check: &'static str, detail: String) -> ValidationFailure {
    ValidationFailure { check, detail }
}

/// Run every dataset integrity check, stopping at the first failure.
pub fn validate_dataset(records: &[TrialRecord]) -> Result<ValidationSummary, ValidationFailure> {
    let mut checks_run = Vec::new();

    // Total photo count across all records.
    checks_run.push("photo-count");
    let photos: usize = records.iter().map(|r| r.photo_count()).sum();
    if photos != 507 {
        return Err(fail("photo-count", format!("expected 507 photos, found {photos}")));
    }

    // Measured trials per experiment.
    checks_run.push("trial-cardinality");
    let mut trials = [0usize; 4];
    for r in records.iter().filter(|r| r.measured) {
        match r.experiment_id {
            1..=4 => trials[r.experiment_id as usize - 1] += 1,
            other => {
                return Err(fail(
                    "trial-cardinality",
                    format!("record with unknown experiment id {other}"),
                ))
            }
        }
    }
    if trials != [16, 18, 81, 54] {
        return Err(fail(
            "trial-cardinality",
            format!("expected [16, 18, 81, 54] measured trials, found {trials:?}"),
        ));
    }

    // Per-distance slice totals must match the layout enumeration.
    checks_run.push("slice-cardinality");
    for experiment_id in 1..=4u8 {
        let layout = scenegen::build_layout(experiment_id).expect("ids 1-4 are valid");
        for distance in measured_distances(records, experiment_id) {
            let expected = layout.trials_at(distance as f64).len();
            let actual = measured_slice(records, experiment_id, distance).len();
            if expected != actual {
                return Err(fail(
                    "slice-cardinality",
                    format!(
                        "experiment {experiment_id} at {distance} ft: \
                         {actual} records vs {expected} layout trials"
                    ),
                ));
            }
        }
        let layout_total = layout.trials.len();
        if trials[experiment_id as usize - 1] != layout_total {
            return Err(fail(
                "slice-cardinality",
                format!(
                    "experiment {experiment_id}: {} records vs {layout_total} layout trials",
                    trials[experiment_id as usize - 1]
                ),
            ));
        }
    }

    // Photo structure and per-photo success conjunction.
    checks_run.push("photo-structure");
    for r in records {
        let ok = match (r.measured, r.pre_aggregated) {
            (false, _) => r.photos.is_empty(),
            (true, true) => r.photos.len() == 1,
            (true, false) => r.photos.len() == 3,
        };
        if !ok {
            return Err(fail(
                "photo-structure",
                format!(
                    "experiment {} at {} ft: {} photos (measured={}, pre_aggregated={})",
                    r.experiment_id,
                    r.camera_distance_ft,
                    r.photos.len(),
                    r.measured,
                    r.pre_aggregated
                ),
            ));
        }
        for p in &r.photos {
            let applicable: Vec<bool> = [p.detected_person, p.detected_car]
                .into_iter()
                .flatten()
                .collect();
            if !applicable.is_empty() && p.success != applicable.iter().all(|&d| d) {
                return Err(fail(
                    "photo-structure",
                    format!(
                        "experiment {} at {} ft: success flag contradicts per-target outcomes",
                        r.experiment_id, r.camera_distance_ft
                    ),
                ));
            }
        }
    }

    // Rate bounds over every slice.
    checks_run.push("rate-bounds");
    for experiment_id in 1..=4u8 {
        for distance in measured_distances(records, experiment_id) {
            let rate = success_rate(records, experiment_id, distance)
                .expect("distance came from a measured record");
            validate_rate_row(&rate).map_err(|f| fail("rate-bounds", f.detail))?;
        }
    }

    // Same-lane baseline pairs of experiment 3: the projections overlap and
    // every such record is a failure.
    checks_run.push("overlap-correlation");
    for r in records.iter().filter(|r| r.experiment_id == 3 && r.measured) {
        let (car, person) = match (&r.car, &r.person) {
            (Some(c), Some(p)) => (c, p),
            _ => {
                return Err(fail(
                    "overlap-correlation",
                    "experiment 3 record missing a placement".to_string(),
                ))
            }
        };
        if car.lane != person.lane || person.offset_ft != 0.0 {
            continue;
        }
        let scene = SceneConfig::at_distance(r.camera_distance_ft as f64);
        let overlaps = scenegen::overlap_flag(
            &SceneObject::person(person.lane, person.offset_ft),
            &SceneObject::car(car.lane, car.offset_ft),
            &scene,
        )
        .map_err(|e| fail("overlap-correlation", e.to_string()))?;
        if !overlaps {
            return Err(fail(
                "overlap-correlation",
                format!(
                    "same-lane baseline pair at {} ft does not project to overlapping boxes",
                    r.camera_distance_ft
                ),
            ));
        }
        if r.final_result() != Some(false) {
            return Err(fail(
                "overlap-correlation",
                format!(
                    "overlapping {} pair at {} ft recorded as success",
                    person.lane.name(),
                    r.camera_distance_ft
                ),
            ));
        }
    }

    Ok(ValidationSummary {
        photos,
        trials,
        checks_run,
    })
}

/// Bounds checks for a single computed rate row.
pub fn validate_rate_row(row: &DistanceRate) -> Result<(), ValidationFailure> {
    if row.passes > row.total {
        return Err(fail(
            "rate-bounds",
            format!("passes {} exceeds total {}", row.passes, row.total),
        ));
    }
    if !(0.0..=100.0).contains(&row.rate_pct) {
        return Err(fail(
            "rate-bounds",
            format!("rate {}% outside [0, 100]", row.rate_pct),
        ));
    }
    let expected = 100.0 * row.passes as f64 / row.total.max(1) as f64;
    if (row.rate_pct - expected).abs() > 1e-9 {
        return Err(fail(
            "rate-bounds",
            format!(
                "rate {}% inconsistent with {}/{}",
                row.rate_pct, row.passes, row.total
            ),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Record CSV
// ---------------------------------------------------------------------------

pub const RECORD_CSV_HEADER: &str = "experiment,camera_distance_ft,car_lane,car_offset_ft,\
person_lane,person_offset_ft,photo_index,detected_person,detected_car,success,pre_aggregated";

fn lane_to_csv(p: &Option<Placement>) -> (String, String) {
    match p {
        Some(place) => (place.lane.name().to_string(), format!("{}", place.offset_ft)),
        None => (String::new(), String::new()),
    }
}

fn bool_to_csv(b: Option<bool>) -> String {
    match b {
        Some(true) => "1".to_string(),
        Some(false) => "0".to_string(),
        None => String::new(),
    }
}

/// One row per photo, or one row per pre-aggregated trial. Unmeasured cells
/// produce no rows.
pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(RECORD_CSV_HEADER);
    out.push('\n');
    for r in records.iter().filter(|r| r.measured) {
        let (car_lane, car_offset) = lane_to_csv(&r.car);
        let (person_lane, person_offset) = lane_to_csv(&r.person);
        for (index, photo) in r.photos.iter().enumerate() {
            let photo_index = if r.pre_aggregated {
                String::new()
            } else {
                index.to_string()
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.experiment_id,
                r.camera_distance_ft,
                car_lane,
                car_offset,
                person_lane,
                person_offset,
                photo_index,
                bool_to_csv(photo.detected_person),
                bool_to_csv(photo.detected_car),
                if photo.success { 1 } else { 0 },
                if r.pre_aggregated { 1 } else { 0 },
            ));
        }
    }
    out
}

fn parse_lane(field: &str, line: usize) -> Result<Lane, EvalError> {
    match field {
        "left" => Ok(Lane::Left),
        "middle" => Ok(Lane::Middle),
        "right" => Ok(Lane::Right),
        other => Err(EvalError::Csv {
            line,
            reason: format!("unknown lane {other:?}"),
        }),
    }
}

fn parse_opt_bool(field: &str, line: usize) -> Result<Option<bool>, EvalError> {
    match field {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(EvalError::Csv {
            line,
            reason: format!("expected 0/1/empty boolean, got {other:?}"),
        }),
    }
}

fn parse_placement(
    lane_field: &str,
    offset_field: &str,
    line: usize,
) -> Result<Option<Placement>, EvalError> {
    if lane_field.is_empty() {
        return Ok(None);
    }
    let lane = parse_lane(lane_field, line)?;
    let offset_ft = offset_field.parse::<f64>().map_err(|_| EvalError::Csv {
        line,
        reason: format!("bad offset {offset_field:?}"),
    })?;
    Ok(Some(Placement { lane, offset_ft }))
}

/// Parse records written by [`records_to_csv`]. Rows belonging to the same
/// position pair are grouped back into one record; unmeasured cells are not
/// representable and simply absent.
pub fn records_from_csv(csv: &str) -> Result<Vec<TrialRecord>, EvalError> {
    let mut lines = csv.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == RECORD_CSV_HEADER => {}
        _ => {
            return Err(EvalError::Csv {
                line: 1,
                reason: "missing or wrong header row".to_string(),
            })
        }
    }

    let mut records: Vec<TrialRecord> = Vec::new();
    for (index, raw) in lines {
        let line = index + 1;
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 11 {
            return Err(EvalError::Csv {
                line,
                reason: format!("expected 11 fields, got {}", fields.len()),
            });
        }
        let experiment_id = fields[0].parse::<u8>().map_err(|_| EvalError::Csv {
            line,
            reason: format!("bad experiment id {:?}", fields[0]),
        })?;
        let camera_distance_ft = fields[1].parse::<u32>().map_err(|_| EvalError::Csv {
            line,
            reason: format!("bad camera distance {:?}", fields[1]),
        })?;
        let car = parse_placement(fields[2], fields[3], line)?;
        let person = parse_placement(fields[4], fields[5], line)?;
        let photo = PhotoOutcome {
            detected_person: parse_opt_bool(fields[7], line)?,
            detected_car: parse_opt_bool(fields[8], line)?,
            success: parse_opt_bool(fields[9], line)?.ok_or_else(|| EvalError::Csv {
                line,
                reason: "success field is mandatory".to_string(),
            })?,
        };
        let pre_aggregated = parse_opt_bool(fields[10], line)?.ok_or_else(|| EvalError::Csv {
            line,
            reason: "pre_aggregated field is mandatory".to_string(),
        })?;

        let same_trial = records.last().map(|r: &TrialRecord| {
            r.experiment_id == experiment_id
                && r.camera_distance_ft == camera_distance_ft
                && r.car == car
                && r.person == person
                && !r.pre_aggregated
        });
        if same_trial == Some(true) && !pre_aggregated {
            records.last_mut().unwrap().photos.push(photo);
        } else {
            records.push(TrialRecord {
                experiment_id,
                camera_distance_ft,
                car,
                person,
                photos: vec![photo],
                measured: true,
                pre_aggregated,
            });
        }
    }
    Ok(records)
}
