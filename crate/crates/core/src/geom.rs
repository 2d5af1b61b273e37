//! Coordinate conventions and sampling grids.
//!
//! Normalized coordinates span `[-1, 1]` per axis with corner alignment:
//! `(-1, -1)` is the top-left pixel center and `(1, 1)` the bottom-right
//! pixel center. Pixel points are `(x, y)` with `x` along the width axis;
//! dimension tuples are `(height, width)` throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-D point in normalized image coordinates.
///
/// Values are usually inside `[-1, 1]`; points outside the square are legal
/// (they denote locations outside the image) but must be finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormCoord {
    pub x: f64,
    pub y: f64,
}

impl NormCoord {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite normalized coordinate ({x}, {y})"
            )));
        }
        Ok(Self { x, y })
    }

    /// Clamp both components into `[-1, 1]`; the flag reports whether
    /// anything moved.
    pub fn clamp_unit(self) -> (Self, bool) {
        let cx = self.x.clamp(-1.0, 1.0);
        let cy = self.y.clamp(-1.0, 1.0);
        let moved = cx != self.x || cy != self.y;
        (Self { x: cx, y: cy }, moved)
    }
}

/// Integer pixel results are snapped so that `norm_to_pixel(pixel_to_norm(p))`
/// is exact for every integer `p`. Plain f64 affine maps miss exactness by up
/// to ~2e-13 (division rounding), which would break bit-exact identity warps;
/// the snap window is far below any meaningful sub-pixel precision.
const PIXEL_SNAP: f64 = 1e-9;

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < PIXEL_SNAP {
        r
    } else {
        v
    }
}

/// Map a pixel point `(x, y)` to normalized coordinates for an image of the
/// given `(height, width)`. Points outside the image are mapped affinely.
pub fn pixel_to_norm(p: (f64, f64), dims: (usize, usize)) -> NormCoord {
    assert!(
        dims.0 >= 2 && dims.1 >= 2,
        "pixel_to_norm requires dims >= 2, got {dims:?}"
    );
    let dx = (dims.1 - 1) as f64;
    let dy = (dims.0 - 1) as f64;
    NormCoord {
        x: (2.0 * p.0 - dx) / dx,
        y: (2.0 * p.1 - dy) / dy,
    }
}

/// Inverse of [`pixel_to_norm`]; exact for integer pixel positions.
pub fn norm_to_pixel(c: NormCoord, dims: (usize, usize)) -> (f64, f64) {
    assert!(
        dims.0 >= 2 && dims.1 >= 2,
        "norm_to_pixel requires dims >= 2, got {dims:?}"
    );
    let dx = (dims.1 - 1) as f64;
    let dy = (dims.0 - 1) as f64;
    (snap((c.x * dx + dx) * 0.5), snap((c.y * dy + dy) * 0.5))
}

/// A dense field assigning every output pixel a source coordinate in
/// normalized space. Row-major; `clamped` records whether any raw coordinate
/// fell outside `[-1, 1]` before clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    height: usize,
    width: usize,
    coords: Vec<NormCoord>,
    clamped: bool,
}

impl SamplingGrid {
    /// Build a grid from coordinates already inside `[-1, 1]`.
    pub fn new(height: usize, width: usize, coords: Vec<NormCoord>, clamped: bool) -> Result<Self> {
        check_dims(height, width)?;
        if coords.len() != height * width {
            return Err(Error::Dimension(format!(
                "grid {height}x{width} expects {} coords, got {}",
                height * width,
                coords.len()
            )));
        }
        for c in &coords {
            if !c.x.is_finite() || !c.y.is_finite() {
                return Err(Error::InvalidInput("non-finite grid coordinate".into()));
            }
        }
        Ok(Self {
            height,
            width,
            coords,
            clamped,
        })
    }

    /// Build a grid from raw coordinates, clamping anything outside `[-1, 1]`
    /// and setting the `clamped` flag if that happened.
    pub fn from_raw(height: usize, width: usize, coords: Vec<NormCoord>) -> Result<Self> {
        let mut clamped = false;
        let mut out = coords;
        for c in &mut out {
            if !c.x.is_finite() || !c.y.is_finite() {
                return Err(Error::InvalidInput("non-finite grid coordinate".into()));
            }
            let (cc, moved) = c.clamp_unit();
            *c = cc;
            clamped |= moved;
        }
        Self::new(height, width, out, clamped)
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

    pub fn is_clamped(&self) -> bool {
        self.clamped
    }

    pub fn coords(&self) -> &[NormCoord] {
        &self.coords
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> NormCoord {
        self.coords[row * self.width + col]
    }

    /// Interpolate the grid at a fractional position `(x, y)` in grid-index
    /// units, linear per axis over the two closest cells of each axis.
    /// Positions outside the grid are clamped to the boundary cell.
    pub fn bilinear_at(&self, x: f64, y: f64) -> NormCoord {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let top = lerp2(self.at(y0, x0), self.at(y0, x1), fx);
        let bot = lerp2(self.at(y1, x0), self.at(y1, x1), fx);
        lerp2(top, bot, fy)
    }
}

#[inline]
fn lerp2(a: NormCoord, b: NormCoord, t: f64) -> NormCoord {
    NormCoord {
        x: a.x + t * (b.x - a.x),
        y: a.y + t * (b.y - a.y),
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height < 2 || width < 2 {
        return Err(Error::Dimension(format!(
            "grid dimensions must be at least 2x2, got {height}x{width}"
        )));
    }
    Ok(())
}

/// The zero-displacement grid: `coords[i·width + j]` is the normalized
/// position of output pixel `(j, i)` itself.
pub fn identity_grid(height: usize, width: usize) -> Result<SamplingGrid> {
    check_dims(height, width)?;
    let mut coords = Vec::with_capacity(height * width);
    for i in 0..height {
        for j in 0..width {
            coords.push(pixel_to_norm((j as f64, i as f64), (height, width)));
        }
    }
    SamplingGrid::new(height, width, coords, false)
}
