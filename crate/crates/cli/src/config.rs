//! Flat key=value constants file. Unknown keys are an error so a typo can
//! never silently fall back to a default.

use thiserror::Error;
use trafficdet_core::gridcodec::GridConfig;
use trafficdet_core::postprocess::PostprocessConfig;
use trafficdet_core::scenegen::{
    ObjectSizes, DEFAULT_FOCAL_SCALE, DEFAULT_IMAGE_ASPECT, DEFAULT_LANE_SPACING_FT,
};

/// Everything the commands can be reconfigured with.
#[derive(Debug, Clone, PartialEq)]
pub struct Constants {
    pub focal_scale: f64,
    pub image_aspect: f64,
    pub lane_spacing_ft: f64,
    pub sizes: ObjectSizes,
    pub grid: GridConfig,
    pub post: PostprocessConfig,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            focal_scale: DEFAULT_FOCAL_SCALE,
            image_aspect: DEFAULT_IMAGE_ASPECT,
            lane_spacing_ft: DEFAULT_LANE_SPACING_FT,
            sizes: ObjectSizes::default(),
            grid: GridConfig::default(),
            post: PostprocessConfig::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value', got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
}

fn parse_f64(key: &str, value: &str, line: usize) -> Result<f64, ConfigError> {
    value.parse::<f64>().map_err(|e| ConfigError::BadValue {
        line,
        key: key.to_string(),
        reason: e.to_string(),
    })
}

fn parse_usize(key: &str, value: &str, line: usize) -> Result<usize, ConfigError> {
    value.parse::<usize>().map_err(|e| ConfigError::BadValue {
        line,
        key: key.to_string(),
        reason: e.to_string(),
    })
}

fn require_positive(key: &str, value: f64, line: usize) -> Result<f64, ConfigError> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(ConfigError::BadValue {
            line,
            key: key.to_string(),
            reason: format!("{value} must be positive"),
        })
    }
}

fn require_fraction(key: &str, value: f64, line: usize) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ConfigError::BadValue {
            line,
            key: key.to_string(),
            reason: format!("{value} outside [0, 1]"),
        })
    }
}

/// Parse a constants file: one `key = value` per line, `#` comments and
/// blank lines ignored.
pub fn parse_constants(text: &str) -> Result<Constants, ConfigError> {
    let mut constants = Constants::default();
    let mut grid = (constants.grid.s, constants.grid.b, constants.grid.c);

    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line,
            text: trimmed.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "focal_scale" => {
                constants.focal_scale = require_positive(key, parse_f64(key, value, line)?, line)?
            }
            "image_aspect" => {
                constants.image_aspect = require_positive(key, parse_f64(key, value, line)?, line)?
            }
            "lane_spacing_ft" => {
                constants.lane_spacing_ft =
                    require_positive(key, parse_f64(key, value, line)?, line)?
            }
            "person_width_ft" => {
                constants.sizes.person_width_ft =
                    require_positive(key, parse_f64(key, value, line)?, line)?
            }
            "person_height_ft" => {
                constants.sizes.person_height_ft =
                    require_positive(key, parse_f64(key, value, line)?, line)?
            }
            "car_width_ft" => {
                constants.sizes.car_width_ft =
                    require_positive(key, parse_f64(key, value, line)?, line)?
            }
            "car_height_ft" => {
                constants.sizes.car_height_ft =
                    require_positive(key, parse_f64(key, value, line)?, line)?
            }
            "grid_s" => grid.0 = parse_usize(key, value, line)?,
            "grid_b" => grid.1 = parse_usize(key, value, line)?,
            "grid_c" => grid.2 = parse_usize(key, value, line)?,
            "score_threshold" => {
                constants.post.score_threshold =
                    require_fraction(key, parse_f64(key, value, line)?, line)?
            }
            "nms_iou_threshold" => {
                constants.post.nms_iou_threshold =
                    require_fraction(key, parse_f64(key, value, line)?, line)?
            }
            other => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
    }

    constants.grid = GridConfig::new(grid.0, grid.1, grid.2).map_err(|e| ConfigError::BadValue {
        line: 0,
        key: "grid_s/grid_b/grid_c".to_string(),
        reason: e.to_string(),
    })?;
    Ok(constants)
}
