//! Core math of a grid-cell single-stage detector — box geometry, target
//! tensor codec, multi-part training loss with gradient, score filtering and
//! non-max suppression — together with a staged traffic-scene model and the
//! embedded four-experiment benchmark dataset it is evaluated against.

pub mod evaldata;
pub mod geometry;
pub mod gridcodec;
pub mod loss;
pub mod postprocess;
pub mod scenegen;
pub mod selfcheck;

pub use evaldata::{
    DistanceRate, EvalError, PhotoOutcome, Placement, SuccessRateReport, TrialRecord,
    ValidationFailure, ValidationSummary,
};
pub use geometry::{iou, BoundingBox, GeometryError, ScoredDetection};
pub use gridcodec::{
    decode, encode, responsible_cell, CodecError, DetectionTensor, GridConfig, GroundTruthObject,
};
pub use loss::{
    assign_responsible_predictor, loss_gradient, yolo_loss, LossBreakdown, LossError, LossWeights,
};
pub use postprocess::{class_confidence, detect, filter_by_score, nms, PostprocessConfig};
pub use scenegen::{
    build_layout, overlap_flag, project, ExperimentLayout, Lane, ObjectKind, ObjectSizes,
    SceneConfig, SceneError, SceneObject, Trial,
};
