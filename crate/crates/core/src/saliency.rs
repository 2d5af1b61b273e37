//! Detection-to-saliency-map generation.
//!
//! Detections scoring at least `tau` are rasterized at the working map
//! resolution: small objects (area below `alpha_pct` percent of the image)
//! get `small_label`, larger ones `large_label`, background `background_label`.
//! Overlaps keep the maximum label, so small objects win over large ones.

use serde::{Deserialize, Serialize};

use crate::detection::{CoordSpace, Detection};
use crate::error::{Error, Result};

/// 2-D float field in `[0, 1]` encoding pixel importance.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "saliency map dimensions must be positive, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::Dimension(format!(
                "saliency map {height}x{width} expects {} values, got {}",
                height * width,
                values.len()
            )));
        }
        for &v in &values {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "saliency value {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyConfig {
    /// Score threshold; detections with `score >= tau` are kept.
    pub tau: f64,
    /// Area threshold as a percentage of the image area separating small
    /// from large objects.
    pub alpha_pct: f64,
    pub small_label: f64,
    pub large_label: f64,
    pub background_label: f64,
    /// Working resolution of the generated map, `(height, width)`.
    pub out_size: (usize, usize),
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            alpha_pct: 0.5,
            small_label: 1.0,
            large_label: 0.5,
            background_label: 0.0,
            out_size: (128, 128),
        }
    }
}

impl SaliencyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        let alpha_ok = self.alpha_pct.is_finite() && self.alpha_pct > 0.0;
        if !alpha_ok {
            return Err(Error::Config(format!(
                "alpha_pct must be positive, got {}",
                self.alpha_pct
            )));
        }
        let (bg, lg, sm) = (self.background_label, self.large_label, self.small_label);
        if !(0.0 <= bg && bg < lg && lg < sm && sm <= 1.0) {
            return Err(Error::Config(format!(
                "labels must satisfy 0 <= bg < large < small <= 1, got ({bg}, {lg}, {sm})"
            )));
        }
        if self.out_size.0 == 0 || self.out_size.1 == 0 {
            return Err(Error::Config("out_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectSizeClass {
    Small,
    Large,
}

/// Classify a detection by area against `alpha_pct` percent of the image
/// area. Ties at exactly the threshold are Large.
pub fn classify_size(
    det: &Detection,
    image_dims: (usize, usize),
    cfg: &SaliencyConfig,
) -> Result<ObjectSizeClass> {
    if det.space != CoordSpace::Original {
        return Err(Error::InvalidInput(
            "classify_size expects detections in original-image space".into(),
        ));
    }
    let area = det.bbox.area();
    if area <= 0.0 || area.is_nan() {
        return Err(Error::InvalidBox("zero-area box".into()));
    }
    let image_area = (image_dims.0 * image_dims.1) as f64;
    let threshold = cfg.alpha_pct / 100.0 * image_area;
    Ok(if area < threshold {
        ObjectSizeClass::Small
    } else {
        ObjectSizeClass::Large
    })
}

/// Rasterize detections into a saliency map at `cfg.out_size`.
///
/// Boxes are scaled through the affine pixel mapping and rasterized with
/// half-open pixel-center coverage; overlapping boxes keep the maximum label.
/// All detections must be in original-image space.
pub fn generate_saliency(
    dets: &[Detection],
    image_dims: (usize, usize),
    cfg: &SaliencyConfig,
) -> Result<SaliencyMap> {
    cfg.validate()?;
    let (oh, ow) = cfg.out_size;
    let mut values = vec![cfg.background_label; oh * ow];
    let sx = ow as f64 / image_dims.1 as f64;
    let sy = oh as f64 / image_dims.0 as f64;

    for det in dets {
        assert!(
            det.space == CoordSpace::Original,
            "generate_saliency expects original-space detections"
        );
        if det.score < cfg.tau {
            continue;
        }
        let label = match classify_size(det, image_dims, cfg)? {
            ObjectSizeClass::Small => cfg.small_label,
            ObjectSizeClass::Large => cfg.large_label,
        };
        let x0 = det.bbox.x_min * sx;
        let x1 = det.bbox.x_max * sx;
        let y0 = det.bbox.y_min * sy;
        let y1 = det.bbox.y_max * sy;
        // pixel (r, c) is covered when its center (c + 0.5, r + 0.5) lies in
        // the half-open scaled box
        let c_min = (x0 - 0.5).ceil().max(0.0) as usize;
        let c_max_excl = ((x1 - 0.5).ceil().max(0.0) as usize).min(ow);
        let r_min = (y0 - 0.5).ceil().max(0.0) as usize;
        let r_max_excl = ((y1 - 0.5).ceil().max(0.0) as usize).min(oh);
        for r in r_min..r_max_excl {
            for c in c_min..c_max_excl {
                let v = &mut values[r * ow + c];
                if label > *v {
                    *v = label;
                }
            }
        }
    }
    SaliencyMap::new(oh, ow, values)
}

/// Which label classes a generated map contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapComposition {
    Empty,
    OnlySmall,
    OnlyLarge,
    Mixed,
}

/// Report which label classes are present in a map produced by
/// [`generate_saliency`] with the same config.
pub fn map_composition(map: &SaliencyMap, cfg: &SaliencyConfig) -> MapComposition {
    let mut has_small = false;
    let mut has_large = false;
    for &v in map.values() {
        has_small |= v == cfg.small_label;
        has_large |= v == cfg.large_label;
        if has_small && has_large {
            break;
        }
    }
    match (has_small, has_large) {
        (false, false) => MapComposition::Empty,
        (true, false) => MapComposition::OnlySmall,
        (false, true) => MapComposition::OnlyLarge,
        (true, true) => MapComposition::Mixed,
    }
}
