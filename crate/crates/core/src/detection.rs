//! Bounding-box detections and the coordinate space they live in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which pixel grid a detection's coordinates refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordSpace {
    /// Full-resolution original frame pixels.
    Original,
    /// Pixels of the warped frame produced with the identified sampling grid.
    Resampled { grid_id: u64 },
}

/// Axis-aligned box in pixel coordinates of its tagged space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        for v in [x_min, y_min, x_max, y_max] {
            if !v.is_finite() {
                return Err(Error::InvalidBox("non-finite box coordinate".into()));
            }
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidBox(format!(
                "degenerate box [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x_min, self.y_min),
            (self.x_max, self.y_min),
            (self.x_min, self.y_max),
            (self.x_max, self.y_max),
        ]
    }

    /// Axis-aligned hull of a set of points.
    pub fn hull(points: &[(f64, f64)]) -> Result<Self> {
        let mut x_min = f64::INFINITY;
        let mut y_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for &(x, y) in points {
            x_min = x_min.min(x);
            y_min = y_min.min(y);
            x_max = x_max.max(x);
            y_max = y_max.max(y);
        }
        Self::new(x_min, y_min, x_max, y_max)
    }

    /// Clamp to an image of `(height, width)`; `None` if nothing remains.
    pub fn clamp_to(&self, dims: (usize, usize)) -> Option<Self> {
        let x_min = self.x_min.max(0.0);
        let y_min = self.y_min.max(0.0);
        let x_max = self.x_max.min((dims.1 - 1) as f64);
        let y_max = self.y_max.min((dims.0 - 1) as f64);
        Self::new(x_min, y_min, x_max, y_max).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub category: i64,
    pub space: CoordSpace,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64, category: i64, space: CoordSpace) -> Result<Self> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidInput(format!(
                "detection score {score} outside [0, 1]"
            )));
        }
        Ok(Self {
            bbox,
            score,
            category,
            space,
        })
    }
}
