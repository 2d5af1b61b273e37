//! COCO-style detection JSON.
//!
//! ```json
//! {
//!   "images": [{"id": 0, "file": "frame0000.png", "width": 640, "height": 360}],
//!   "detections": [
//!     {"image_id": 0, "bbox": [x, y, w, h], "score": 0.9, "category_id": 1}
//!   ]
//! }
//! ```
//!
//! Detection entries may carry an optional `space` tag (`"original"` or
//! `{"resampled": {"grid_id": N}}`); absent means original.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{BBox, CoordSpace, Detection};
use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: u64,
    pub file: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceTag {
    Original,
    Resampled { grid_id: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEntry {
    pub image_id: u64,
    /// `[x_min, y_min, width, height]` in pixels.
    pub bbox: [f64; 4],
    pub score: f64,
    pub category_id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceTag>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionFile {
    pub images: Vec<ImageEntry>,
    pub detections: Vec<DetectionEntry>,
}

impl DetectionFile {
    pub fn validate(&self) -> Result<()> {
        let ids: BTreeMap<u64, ()> = self.images.iter().map(|im| (im.id, ())).collect();
        for (k, d) in self.detections.iter().enumerate() {
            if !ids.contains_key(&d.image_id) {
                return Err(Error::Format(format!(
                    "detection {k} references unknown image_id {}",
                    d.image_id
                )));
            }
            let size_ok = d.bbox[2].is_finite()
                && d.bbox[3].is_finite()
                && d.bbox[2] > 0.0
                && d.bbox[3] > 0.0;
            if !size_ok {
                return Err(Error::Format(format!(
                    "detection {k} has non-positive bbox size {:?}",
                    d.bbox
                )));
            }
            if !d.score.is_finite() || !(0.0..=1.0).contains(&d.score) {
                return Err(Error::Format(format!(
                    "detection {k} score {} outside [0, 1]",
                    d.score
                )));
            }
        }
        Ok(())
    }

    pub fn image(&self, id: u64) -> Option<&ImageEntry> {
        self.images.iter().find(|im| im.id == id)
    }

    /// Detections of one image as domain objects.
    pub fn detections_for(&self, image_id: u64) -> Result<Vec<Detection>> {
        self.detections
            .iter()
            .filter(|d| d.image_id == image_id)
            .map(entry_to_detection)
            .collect()
    }

    /// All detections grouped by image id (for frame-indexed playback).
    pub fn by_image(&self) -> Result<BTreeMap<u64, Vec<Detection>>> {
        let mut out: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
        for d in &self.detections {
            out.entry(d.image_id).or_default().push(entry_to_detection(d)?);
        }
        Ok(out)
    }
}

pub fn entry_to_detection(e: &DetectionEntry) -> Result<Detection> {
    let bbox = BBox::new(
        e.bbox[0],
        e.bbox[1],
        e.bbox[0] + e.bbox[2],
        e.bbox[1] + e.bbox[3],
    )?;
    let space = match e.space {
        None | Some(SpaceTag::Original) => CoordSpace::Original,
        Some(SpaceTag::Resampled { grid_id }) => CoordSpace::Resampled { grid_id },
    };
    Detection::new(bbox, e.score, e.category_id, space)
}

pub fn detection_to_entry(d: &Detection, image_id: u64) -> DetectionEntry {
    DetectionEntry {
        image_id,
        bbox: [d.bbox.x_min, d.bbox.y_min, d.bbox.width(), d.bbox.height()],
        score: d.score,
        category_id: d.category,
        space: Some(match d.space {
            CoordSpace::Original => SpaceTag::Original,
            CoordSpace::Resampled { grid_id } => SpaceTag::Resampled { grid_id },
        }),
    }
}

pub fn read_detection_file(path: &Path) -> Result<DetectionFile> {
    let text = std::fs::read_to_string(path)?;
    let file: DetectionFile = serde_json::from_str(&text)?;
    file.validate()?;
    Ok(file)
}

pub fn write_detection_file(path: &Path, file: &DetectionFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(file)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
