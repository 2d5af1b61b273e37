//! Saliency-guided non-uniform downsampling for video object detection.
//!
//! The pipeline stages are:
//!
//! 1. **Saliency** – turn the previous frame's detections into a low-resolution
//!    importance map (small objects 1.0, large objects 0.5, background 0.0).
//! 2. **Attention grid** – build a non-parametric reference sampling grid from
//!    the map's per-axis marginal distributions via inverse-CDF spacing.
//! 3. **Grid fit** – fit thin-plate-spline control-point displacements to the
//!    reference grid with a masked, ridge-regularized weighted least squares,
//!    then render the fitted spline as a dense sampling grid.
//! 4. **Warp** – resample the high-resolution frame through the grid with
//!    bilinear interpolation, magnifying salient regions.
//! 5. **Invert** – map detections found on the warped frame back to original
//!    image coordinates by interpolating the deformation grid.
//! 6. **Schedule** – alternate a heavy keyframe detector with a light detector
//!    on warped frames, with per-frame compute accounting.

pub mod attention;
pub mod detection;
pub mod error;
pub mod fit;
pub mod geom;
pub mod image;
pub mod invert;
pub mod io;
pub mod overlay;
pub mod pipeline;
pub mod saliency;
pub mod tps;
pub mod warp;

pub use detection::{BBox, CoordSpace, Detection};
pub use error::{Error, Result};
pub use geom::{identity_grid, norm_to_pixel, pixel_to_norm, NormCoord, SamplingGrid};
pub use image::ImageBuffer;
pub use saliency::SaliencyMap;
