//! Normalized bounding boxes and intersection-over-union.
//!
//! Boxes are center-parameterized (`x`, `y` is the box center) because the
//! loss penalizes center coordinates directly; the corner form is derived,
//! never stored. All arithmetic is `f64`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Center-parameterized box, all fields normalized fractions of the image.
///
/// A valid box satisfies `0 <= x, y, w, h <= 1` and its derived corner form
/// stays inside the unit square. [`BoundingBox::new`] enforces this; the
/// fields stay public so decoded prediction tensors (which may carry
/// arbitrary values before any training) can be represented without
/// faulting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    /// Center abscissa, fraction of image width.
    pub x: f64,
    /// Center ordinate, fraction of image height.
    pub y: f64,
    /// Width, fraction of image width.
    pub w: f64,
    /// Height, fraction of image height.
    pub h: f64,
}

/// A classified box with its category-specific confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection {
    #[serde(rename = "box")]
    pub box_: BoundingBox,
    /// Category index in `[0, C)`.
    pub category: usize,
    /// Category-specific confidence, `Pr(Class) * IOU`, in `[0, 1]`.
    pub score: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box field {field} = {value} outside [0, 1]")]
    FieldOutOfRange { field: &'static str, value: f64 },
    #[error("box (x={x}, y={y}, w={w}, h={h}) extends outside the unit square")]
    OutsideUnitSquare { x: f64, y: f64, w: f64, h: f64 },
}

impl BoundingBox {
    /// Validated constructor: all fields in `[0, 1]` and corners in frame.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        for (field, value) in [("x", x), ("y", y), ("w", w), ("h", h)] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(GeometryError::FieldOutOfRange { field, value });
            }
        }
        let b = BoundingBox { x, y, w, h };
        let (left, top, right, bottom) = b.to_corner_form();
        if left < 0.0 || top < 0.0 || right > 1.0 || bottom > 1.0 {
            return Err(GeometryError::OutsideUnitSquare { x, y, w, h });
        }
        Ok(b)
    }

    /// `(left, top, right, bottom)` corners derived from the center form.
    pub fn to_corner_form(&self) -> (f64, f64, f64, f64) {
        (
            self.x - self.w / 2.0,
            self.y - self.h / 2.0,
            self.x + self.w / 2.0,
            self.y + self.h / 2.0,
        )
    }

    /// Inverse of [`to_corner_form`](Self::to_corner_form).
    pub fn from_corner_form(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        BoundingBox {
            x: (left + right) / 2.0,
            y: (top + bottom) / 2.0,
            w: right - left,
            h: bottom - top,
        }
    }

    pub fn area(&self) -> f64 {
        if self.w <= 0.0 || self.h <= 0.0 {
            0.0
        } else {
            self.w * self.h
        }
    }
}

/// Intersection over union of two boxes.
///
/// Total on anything box-shaped: zero-area (and inverted) boxes have area 0,
/// and a union of area 0 yields 0 rather than a division fault, so loss
/// evaluation over untrained random tensors never propagates NaN.
///
/// Areas are derived from the corner form, not the stored extents: rounding
/// is monotone, so the intersection extent never exceeds either box extent
/// and the result stays in `[0, 1]` bit-for-bit, with `iou(a, a) == 1`
/// exactly for positive-area boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (al, at, ar, ab) = a.to_corner_form();
    let (bl, bt, br, bb) = b.to_corner_form();

    let area_a = (ar - al).max(0.0) * (ab - at).max(0.0);
    let area_b = (br - bl).max(0.0) * (bb - bt).max(0.0);

    let iw = (ar.min(br) - al.max(bl)).max(0.0);
    let ih = (ab.min(bb) - at.max(bt)).max(0.0);
    let inter = if area_a == 0.0 || area_b == 0.0 {
        0.0
    } else {
        iw * ih
    };

    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}
