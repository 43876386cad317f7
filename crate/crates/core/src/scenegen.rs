//! Staged traffic-scene geometry: camera, baseline, position matrix, and a
//! pinhole projection of persons/cars into normalized image boxes.
//!
//! The camera model is a ground-level pinhole looking horizontally down the
//! middle lane: every object stands on the ground, so projected boxes sit
//! with their bottom edge on the horizon line at `y = 0.5`. Projected height
//! is `focal_scale * world_height / d` for effective distance `d`, widths
//! divide out the image aspect ratio, and boxes are clipped to the unit
//! square.

use crate::geometry::{iou, BoundingBox};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lateral placement on the baseline, seen from the camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lane {
    Left,
    Middle,
    Right,
}

impl Lane {
    pub const ALL: [Lane; 3] = [Lane::Left, Lane::Middle, Lane::Right];

    fn lateral_ft(&self, spacing_ft: f64) -> f64 {
        match self {
            Lane::Left => -spacing_ft,
            Lane::Middle => 0.0,
            Lane::Right => spacing_ft,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Lane::Left => "left",
            Lane::Middle => "middle",
            Lane::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Person,
    Car,
}

impl ObjectKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectKind::Person => "person",
            ObjectKind::Car => "car",
        }
    }
}

/// Default aspect ratio of the simulated photos.
pub const DEFAULT_IMAGE_ASPECT: f64 = 4.0 / 3.0;
/// Spacing between adjacent positions in the placement matrix, feet.
pub const DEFAULT_LANE_SPACING_FT: f64 = 10.0;
/// Sized so the three lane positions on the baseline (a 20 ft span) fill
/// 90% of the image width at the 40 ft camera distance:
/// 0.9 * 40 * (4/3) / 20.
pub const DEFAULT_FOCAL_SCALE: f64 = 2.4;

/// Physical extents used when placing objects, feet. The car is presented
/// broadside, so its projected width comes from its length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSizes {
    pub person_width_ft: f64,
    pub person_height_ft: f64,
    pub car_width_ft: f64,
    pub car_height_ft: f64,
}

impl Default for ObjectSizes {
    fn default() -> Self {
        ObjectSizes {
            person_width_ft: 1.8,
            person_height_ft: 5.7,
            car_width_ft: 15.0,
            car_height_ft: 4.8,
        }
    }
}

/// Camera and scene constants for one staged shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Distance from the camera to the baseline, feet.
    pub camera_distance_ft: f64,
    pub focal_scale: f64,
    pub image_aspect: f64,
    pub lane_spacing_ft: f64,
}

impl SceneConfig {
    /// Default constants at the given camera distance.
    pub fn at_distance(camera_distance_ft: f64) -> Self {
        SceneConfig {
            camera_distance_ft,
            focal_scale: DEFAULT_FOCAL_SCALE,
            image_aspect: DEFAULT_IMAGE_ASPECT,
            lane_spacing_ft: DEFAULT_LANE_SPACING_FT,
        }
    }
}

/// A person or car placed relative to the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub kind: ObjectKind,
    pub lane: Lane,
    /// Distance in front of the baseline toward the camera, feet.
    pub offset_ft: f64,
    pub world_width_ft: f64,
    pub world_height_ft: f64,
}

impl SceneObject {
    pub fn person(lane: Lane, offset_ft: f64) -> Self {
        Self::with_sizes(ObjectKind::Person, lane, offset_ft, &ObjectSizes::default())
    }

    pub fn car(lane: Lane, offset_ft: f64) -> Self {
        Self::with_sizes(ObjectKind::Car, lane, offset_ft, &ObjectSizes::default())
    }

    pub fn with_sizes(kind: ObjectKind, lane: Lane, offset_ft: f64, sizes: &ObjectSizes) -> Self {
        let (world_width_ft, world_height_ft) = match kind {
            ObjectKind::Person => (sizes.person_width_ft, sizes.person_height_ft),
            ObjectKind::Car => (sizes.car_width_ft, sizes.car_height_ft),
        };
        SceneObject {
            kind,
            lane,
            offset_ft,
            world_width_ft,
            world_height_ft,
        }
    }
}

/// One camera setup with its placed objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub camera_distance_ft: f64,
    pub objects: Vec<SceneObject>,
}

/// Full placement enumeration of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentLayout {
    pub experiment_id: u8,
    pub trials: Vec<Trial>,
}

impl ExperimentLayout {
    pub fn trials_at(&self, camera_distance_ft: f64) -> Vec<&Trial> {
        self.trials
            .iter()
            .filter(|t| t.camera_distance_ft == camera_distance_ft)
            .collect()
    }

    /// Photos shot for this layout: three per trial.
    pub fn photo_count(&self) -> usize {
        3 * self.trials.len()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("object at offset {offset_ft} ft is not in front of the camera at {camera_distance_ft} ft")]
    BehindCamera {
        camera_distance_ft: f64,
        offset_ft: f64,
    },
    #[error("unknown experiment id {0}; expected 1-4")]
    UnknownExperiment(u8),
}

/// Project an object through the pinhole into a normalized, clipped box.
pub fn project(obj: &SceneObject, scene: &SceneConfig) -> Result<BoundingBox, SceneError> {
    let d = scene.camera_distance_ft - obj.offset_ft;
    if d <= 0.0 {
        return Err(SceneError::BehindCamera {
            camera_distance_ft: scene.camera_distance_ft,
            offset_ft: obj.offset_ft,
        });
    }

    let height = scene.focal_scale * obj.world_height_ft / d;
    let width = scene.focal_scale * obj.world_width_ft / (d * scene.image_aspect);
    let x = 0.5 + scene.focal_scale * obj.lane.lateral_ft(scene.lane_spacing_ft)
        / (d * scene.image_aspect);

    // Bottom edge on the horizon line, box extending upward.
    let left = x - width / 2.0;
    let right = x + width / 2.0;
    let top = 0.5 - height;
    let bottom = 0.5;
    if left >= 0.0 && right <= 1.0 && top >= 0.0 {
        // In frame: keep the projected extents exact (the 1/d scaling law
        // holds bit-for-bit), only the center form is derived.
        return Ok(BoundingBox {
            x,
            y: 0.5 - height / 2.0,
            w: width,
            h: height,
        });
    }
    Ok(BoundingBox::from_corner_form(
        left.clamp(0.0, 1.0),
        top.clamp(0.0, 1.0),
        right.clamp(0.0, 1.0),
        bottom,
    ))
}

/// True when the two projected boxes share any area.
pub fn overlap_flag(a: &SceneObject, b: &SceneObject, scene: &SceneConfig) -> Result<bool, SceneError> {
    Ok(iou(&project(a, scene)?, &project(b, scene)?) > 0.0)
}

const MATRIX_OFFSETS_FT: [f64; 3] = [0.0, 10.0, 20.0];

/// Enumerate an experiment's placements with default object sizes.
pub fn build_layout(experiment_id: u8) -> Result<ExperimentLayout, SceneError> {
    build_layout_with_sizes(experiment_id, &ObjectSizes::default())
}

/// Enumerate an experiment's placements.
///
/// Trials come out in deterministic order: camera distance, then baseline
/// lane, then matrix position row-major (offset row, then lane).
pub fn build_layout_with_sizes(
    experiment_id: u8,
    sizes: &ObjectSizes,
) -> Result<ExperimentLayout, SceneError> {
    let mut trials = Vec::new();
    match experiment_id {
        // Single person on the baseline; 10 ft was shot middle-lane only.
        1 => {
            for distance in [10.0, 20.0, 30.0, 40.0, 50.0, 60.0] {
                let lanes: &[Lane] = if distance == 10.0 {
                    &[Lane::Middle]
                } else {
                    &Lane::ALL
                };
                for &lane in lanes {
                    trials.push(Trial {
                        camera_distance_ft: distance,
                        objects: vec![SceneObject::with_sizes(
                            ObjectKind::Person,
                            lane,
                            0.0,
                            sizes,
                        )],
                    });
                }
            }
        }
        // Single car on the baseline, all lanes at all six distances.
        2 => {
            for distance in [10.0, 20.0, 30.0, 40.0, 50.0, 60.0] {
                for lane in Lane::ALL {
                    trials.push(Trial {
                        camera_distance_ft: distance,
                        objects: vec![SceneObject::with_sizes(
                            ObjectKind::Car,
                            lane,
                            0.0,
                            sizes,
                        )],
                    });
                }
            }
        }
        // Car on the baseline, person anywhere in the 3x3 matrix.
        3 => {
            for distance in [40.0, 50.0, 60.0] {
                for car_lane in Lane::ALL {
                    for offset in MATRIX_OFFSETS_FT {
                        for person_lane in Lane::ALL {
                            trials.push(Trial {
                                camera_distance_ft: distance,
                                objects: vec![
                                    SceneObject::with_sizes(
                                        ObjectKind::Person,
                                        person_lane,
                                        offset,
                                        sizes,
                                    ),
                                    SceneObject::with_sizes(
                                        ObjectKind::Car,
                                        car_lane,
                                        0.0,
                                        sizes,
                                    ),
                                ],
                            });
                        }
                    }
                }
            }
        }
        // Person on the baseline, car in the matrix minus the person's own
        // lane (a car there would block the person from the camera).
        4 => {
            for distance in [40.0, 50.0, 60.0] {
                for person_lane in Lane::ALL {
                    for offset in MATRIX_OFFSETS_FT {
                        for car_lane in Lane::ALL {
                            if car_lane == person_lane {
                                continue;
                            }
                            trials.push(Trial {
                                camera_distance_ft: distance,
                                objects: vec![
                                    SceneObject::with_sizes(
                                        ObjectKind::Person,
                                        person_lane,
                                        0.0,
                                        sizes,
                                    ),
                                    SceneObject::with_sizes(
                                        ObjectKind::Car,
                                        car_lane,
                                        offset,
                                        sizes,
                                    ),
                                ],
                            });
                        }
                    }
                }
            }
        }
        other => return Err(SceneError::UnknownExperiment(other)),
    }
    Ok(ExperimentLayout {
        experiment_id,
        trials,
    })
}
