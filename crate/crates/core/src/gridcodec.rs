//! Encoding ground truth into the `S x S x (5B + C)` target tensor and
//! decoding prediction tensors back into image-space boxes.
//!
//! Per-cell layout is fixed: `B` five-tuples `(x_offset, y_offset, w, h,
//! confidence)` followed by `C` class probabilities. Cells are row-major.
//! Ground truth always occupies predictor slot 0; which of the `B` slots is
//! "responsible" is a training-time decision, not an encoding property.

use crate::geometry::BoundingBox;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Detector shape parameters: grid side `S`, boxes per cell `B`, classes `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub s: usize,
    pub b: usize,
    pub c: usize,
}

impl GridConfig {
    pub fn new(s: usize, b: usize, c: usize) -> Result<Self, CodecError> {
        if s == 0 || b == 0 || c == 0 {
            return Err(CodecError::InvalidConfig { s, b, c });
        }
        Ok(GridConfig { s, b, c })
    }

    /// Values stored per cell: `5B + C`.
    pub fn cell_width(&self) -> usize {
        5 * self.b + self.c
    }

    /// Total tensor length: `S * S * (5B + C)`.
    pub fn tensor_len(&self) -> usize {
        self.s * self.s * self.cell_width()
    }
}

impl Default for GridConfig {
    /// The classic 7x7 grid with 2 boxes and 20 classes (30 values per cell).
    fn default() -> Self {
        GridConfig { s: 7, b: 2, c: 20 }
    }
}

/// Flat `S*S*(5B+C)` value array with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTensor {
    #[serde(flatten)]
    pub config: GridConfig,
    pub values: Vec<f64>,
}

/// An object to encode: image-normalized box plus category index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthObject {
    pub box_: BoundingBox,
    pub category: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("grid config (S={s}, B={b}, C={c}) has a zero dimension")]
    InvalidConfig { s: usize, b: usize, c: usize },
    #[error("tensor holds {actual} values, config requires {expected}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("box center ({x}, {y}) outside [0, 1) x [0, 1)")]
    CenterOutOfDomain { x: f64, y: f64 },
    #[error("category {category} out of range for C={c}")]
    CategoryOutOfRange { category: usize, c: usize },
    #[error("two objects land in cell ({row}, {col}); one object per cell")]
    CellConflict { row: usize, col: usize },
}

impl DetectionTensor {
    /// All-zero tensor of the configured shape.
    pub fn zeros(config: GridConfig) -> Self {
        DetectionTensor {
            config,
            values: vec![0.0; config.tensor_len()],
        }
    }

    pub fn from_values(config: GridConfig, values: Vec<f64>) -> Result<Self, CodecError> {
        if values.len() != config.tensor_len() {
            return Err(CodecError::ShapeMismatch {
                expected: config.tensor_len(),
                actual: values.len(),
            });
        }
        Ok(DetectionTensor { config, values })
    }

    /// Flat index of the start of a cell's record.
    pub fn cell_base(&self, row: usize, col: usize) -> usize {
        (row * self.config.s + col) * self.config.cell_width()
    }

    /// The five-tuple `(x_offset, y_offset, w, h, confidence)` of one predictor.
    pub fn predictor(&self, row: usize, col: usize, slot: usize) -> [f64; 5] {
        let base = self.cell_base(row, col) + 5 * slot;
        [
            self.values[base],
            self.values[base + 1],
            self.values[base + 2],
            self.values[base + 3],
            self.values[base + 4],
        ]
    }

    pub fn class_probs(&self, row: usize, col: usize) -> &[f64] {
        let base = self.cell_base(row, col) + 5 * self.config.b;
        &self.values[base..base + self.config.c]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tensor serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }
}

/// Grid cell responsible for a box: the one containing its center.
///
/// Returns `(row, col)` with `row = floor(y * S)`, `col = floor(x * S)`.
/// Centers at exactly 1.0 have no cell and are rejected.
pub fn responsible_cell(
    box_: &BoundingBox,
    config: &GridConfig,
) -> Result<(usize, usize), CodecError> {
    let (x, y) = (box_.x, box_.y);
    if !(0.0..1.0).contains(&x) || !(0.0..1.0).contains(&y) {
        return Err(CodecError::CenterOutOfDomain { x, y });
    }
    let col = (x * config.s as f64).floor() as usize;
    let row = (y * config.s as f64).floor() as usize;
    Ok((row, col))
}

/// Build the target tensor for a set of ground-truth objects.
///
/// Each object's cell stores `x_offset = x*S - col`, `y_offset = y*S - row`
/// (both in `[0, 1)`), image-normalized `w`, `h`, confidence 1 in predictor
/// slot 0, and a one-hot class vector. Everything else stays zero. Two
/// objects in one cell is an error, not a silent overwrite.
pub fn encode(
    objects: &[GroundTruthObject],
    config: &GridConfig,
) -> Result<DetectionTensor, CodecError> {
    let mut tensor = DetectionTensor::zeros(*config);
    let mut occupied = vec![false; config.s * config.s];

    for obj in objects {
        if obj.category >= config.c {
            return Err(CodecError::CategoryOutOfRange {
                category: obj.category,
                c: config.c,
            });
        }
        let (row, col) = responsible_cell(&obj.box_, config)?;
        if occupied[row * config.s + col] {
            return Err(CodecError::CellConflict { row, col });
        }
        occupied[row * config.s + col] = true;

        let base = tensor.cell_base(row, col);
        tensor.values[base] = obj.box_.x * config.s as f64 - col as f64;
        tensor.values[base + 1] = obj.box_.y * config.s as f64 - row as f64;
        tensor.values[base + 2] = obj.box_.w;
        tensor.values[base + 3] = obj.box_.h;
        tensor.values[base + 4] = 1.0;
        tensor.values[base + 5 * config.b + obj.category] = 1.0;
    }
    Ok(tensor)
}

/// One cell's decoded content: image-space boxes with per-predictor
/// confidence, plus the cell's class-probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedCell {
    pub row: usize,
    pub col: usize,
    /// One `(box, confidence)` pair per predictor slot.
    pub predictors: Vec<(BoundingBox, f64)>,
    pub class_probs: Vec<f64>,
}

/// Reconstruct image-normalized boxes from a tensor.
///
/// `x = (col + x_offset) / S`, `y = (row + y_offset) / S`; `w` and `h` pass
/// through. Boxes are built without unit-square validation since arbitrary
/// prediction tensors may carry out-of-range values.
pub fn decode(tensor: &DetectionTensor) -> Result<Vec<DecodedCell>, CodecError> {
    let config = &tensor.config;
    if tensor.values.len() != config.tensor_len() {
        return Err(CodecError::ShapeMismatch {
            expected: config.tensor_len(),
            actual: tensor.values.len(),
        });
    }

    let s = config.s as f64;
    let mut cells = Vec::with_capacity(config.s * config.s);
    for row in 0..config.s {
        for col in 0..config.s {
            let mut predictors = Vec::with_capacity(config.b);
            for slot in 0..config.b {
                let [x_off, y_off, w, h, conf] = tensor.predictor(row, col, slot);
                let box_ = BoundingBox {
                    x: (col as f64 + x_off) / s,
                    y: (row as f64 + y_off) / s,
                    w,
                    h,
                };
                predictors.push((box_, conf));
            }
            cells.push(DecodedCell {
                row,
                col,
                predictors,
                class_probs: tensor.class_probs(row, col).to_vec(),
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn obj(x: f64, y: f64, w: f64, h: f64, category: usize) -> GroundTruthObject {
        GroundTruthObject {
            box_: BoundingBox { x, y, w, h },
            category,
        }
    }

    #[test]
    fn responsible_cell_examples() {
        let cfg = GridConfig::default();
        let center = |x, y| BoundingBox { x, y, w: 0.1, h: 0.1 };
        assert_eq!(responsible_cell(&center(0.5, 0.5), &cfg).unwrap(), (3, 3));
        assert_eq!(responsible_cell(&center(0.0, 0.0), &cfg).unwrap(), (0, 0));
        assert_eq!(responsible_cell(&center(0.99, 0.01), &cfg).unwrap(), (0, 6));
    }

    #[test]
    fn responsible_cell_rejects_center_at_one() {
        let cfg = GridConfig::default();
        let b = BoundingBox { x: 1.0, y: 0.5, w: 0.0, h: 0.0 };
        assert!(matches!(
            responsible_cell(&b, &cfg),
            Err(CodecError::CenterOutOfDomain { .. })
        ));
    }

    #[test]
    fn encode_empty_is_all_zero_with_classic_shape() {
        let cfg = GridConfig::default();
        let t = encode(&[], &cfg).unwrap();
        assert_eq!(cfg.cell_width(), 30);
        assert_eq!(t.values.len(), 1470);
        assert!(t.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_single_cell_grid() {
        let cfg = GridConfig::new(1, 1, 1).unwrap();
        let t = encode(&[obj(0.5, 0.5, 0.2, 0.4, 0)], &cfg).unwrap();
        assert_eq!(t.values, vec![0.5, 0.5, 0.2, 0.4, 1.0, 1.0]);
    }

    #[test]
    fn encode_offset_arithmetic_on_cell_boundary() {
        // x = 0.5 + 1/14 makes x*S land exactly on 4.0 in f64: column 4,
        // offset 0.0, not column 3 with offset ~1.
        let cfg = GridConfig::new(7, 2, 3).unwrap();
        let t = encode(&[obj(0.5 + 1.0 / 14.0, 0.5, 0.1, 0.1, 1)], &cfg).unwrap();
        let base = t.cell_base(3, 4);
        assert_eq!(t.values[base], 0.0);
        assert_eq!(t.values[base + 1], 0.5);
        assert_eq!(t.values[base + 4], 1.0);
    }

    #[test]
    fn encode_rejects_cell_conflict() {
        let cfg = GridConfig::default();
        let a = obj(0.51, 0.51, 0.1, 0.1, 0);
        let b = obj(0.52, 0.52, 0.1, 0.1, 1);
        assert_eq!(
            encode(&[a, b], &cfg),
            Err(CodecError::CellConflict { row: 3, col: 3 })
        );
    }

    #[test]
    fn encode_rejects_bad_category() {
        let cfg = GridConfig::new(2, 1, 2).unwrap();
        assert!(matches!(
            encode(&[obj(0.5, 0.5, 0.1, 0.1, 2)], &cfg),
            Err(CodecError::CategoryOutOfRange { category: 2, c: 2 })
        ));
    }

    #[test]
    fn decode_recovers_encoded_object() {
        let cfg = GridConfig::default();
        let o = obj(0.31, 0.72, 0.2, 0.4, 5);
        let t = encode(&[o], &cfg).unwrap();
        let cells = decode(&t).unwrap();
        let (row, col) = responsible_cell(&o.box_, &cfg).unwrap();
        let cell = cells
            .iter()
            .find(|c| c.row == row && c.col == col)
            .unwrap();
        let (box_, conf) = cell.predictors[0];
        assert_eq!(conf, 1.0);
        assert_relative_eq!(box_.x, o.box_.x, epsilon = 1e-12);
        assert_relative_eq!(box_.y, o.box_.y, epsilon = 1e-12);
        assert_eq!(box_.w, o.box_.w);
        assert_eq!(box_.h, o.box_.h);
        assert_eq!(cell.class_probs[5], 1.0);
        assert_eq!(cell.class_probs.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn decode_all_zero_tensor() {
        let cfg = GridConfig::new(3, 2, 4).unwrap();
        let cells = decode(&DetectionTensor::zeros(cfg)).unwrap();
        assert_eq!(cells.len(), 9);
        for cell in &cells {
            for (box_, conf) in &cell.predictors {
                assert_eq!(box_.w, 0.0);
                assert_eq!(box_.h, 0.0);
                assert_eq!(*conf, 0.0);
            }
        }
    }

    #[test]
    fn decode_rejects_shape_mismatch() {
        let cfg = GridConfig::new(2, 1, 1).unwrap();
        let t = DetectionTensor {
            config: cfg,
            values: vec![0.0; 5],
        };
        assert!(matches!(decode(&t), Err(CodecError::ShapeMismatch { .. })));
    }

    #[test]
    fn tensor_json_fixture_format() {
        let cfg = GridConfig::new(1, 1, 1).unwrap();
        let t = encode(&[obj(0.5, 0.5, 0.2, 0.4, 0)], &cfg).unwrap();
        let json = t.to_json();
        assert_eq!(
            json,
            r#"{"s":1,"b":1,"c":1,"values":[0.5,0.5,0.2,0.4,1.0,1.0]}"#
        );
        assert_eq!(DetectionTensor::from_json(&json).unwrap(), t);
    }
}
