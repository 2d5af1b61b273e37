//! Apply a sampling grid to an image with bilinear interpolation.
//!
//! Plain bilinear taps follow sampling-grid semantics: no antialiasing
//! prefilter is applied under minification by default. Strongly minifying
//! use cases can opt into [`WarpOptions::prefilter`].

use crate::geom::{norm_to_pixel, SamplingGrid};
use crate::image::ImageBuffer;
use crate::saliency::SaliencyMap;

/// Options for [`warp_image_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WarpOptions {
    /// Box-reduce the source by factors of two until the remaining mean
    /// minification is below 2x before sampling. Off by default: plain
    /// bilinear matches sampling-grid semantics, at the cost of aliasing
    /// under strong minification.
    pub prefilter: bool,
}

/// Resample `src` through `grid`: output pixel (i, j) reads the source at
/// the grid's coordinate, bilinearly interpolated with clamp-to-edge
/// borders. Output dimensions are the grid dimensions.
pub fn warp_image(src: &ImageBuffer, grid: &SamplingGrid) -> ImageBuffer {
    let (gh, gw) = grid.dims();
    let channels = src.channels();
    let mut out = vec![0.0; gh * gw * channels];
    let mut sample = vec![0.0; channels];
    for i in 0..gh {
        for j in 0..gw {
            let c = grid.at(i, j);
            let (px, py) = source_position(c, src.dims());
            sample_bilinear(src, px, py, &mut sample);
            let base = (i * gw + j) * channels;
            out[base..base + channels].copy_from_slice(&sample);
        }
    }
    ImageBuffer::new(gh, gw, channels, out).expect("bilinear output stays in range")
}

/// Sample position for a normalized coordinate; single-pixel axes collapse
/// to 0 instead of hitting the degenerate affine map.
fn source_position(c: crate::geom::NormCoord, dims: (usize, usize)) -> (f64, f64) {
    if dims.0 >= 2 && dims.1 >= 2 {
        return norm_to_pixel(c, dims);
    }
    let axis = |v: f64, d: usize| {
        if d >= 2 {
            let s = (d - 1) as f64;
            (v * s + s) * 0.5
        } else {
            0.0
        }
    };
    (axis(c.x, dims.1), axis(c.y, dims.0))
}

/// [`warp_image`] with options.
pub fn warp_image_with(src: &ImageBuffer, grid: &SamplingGrid, opts: &WarpOptions) -> ImageBuffer {
    if !opts.prefilter {
        return warp_image(src, grid);
    }
    // global mip selection from the mean minification factor
    let factor = ((src.height() * src.width()) as f64
        / (grid.height() * grid.width()) as f64)
        .sqrt();
    let mut reduced = src.clone();
    let mut remaining = factor;
    while remaining > 2.0 && reduced.height() >= 4 && reduced.width() >= 4 {
        reduced = box_halve(&reduced);
        remaining *= 0.5;
    }
    warp_image(&reduced, grid)
}

/// 2x box reduction (average of each 2x2 block; odd trailing rows/columns
/// average what remains).
fn box_halve(src: &ImageBuffer) -> ImageBuffer {
    let h2 = src.height().div_ceil(2);
    let w2 = src.width().div_ceil(2);
    let ch = src.channels();
    let mut out = vec![0.0; h2 * w2 * ch];
    for i in 0..h2 {
        for j in 0..w2 {
            let r1 = (2 * i + 1).min(src.height() - 1);
            let c1 = (2 * j + 1).min(src.width() - 1);
            for c in 0..ch {
                let sum = src.get(2 * i, 2 * j, c)
                    + src.get(2 * i, c1, c)
                    + src.get(r1, 2 * j, c)
                    + src.get(r1, c1, c);
                out[(i * w2 + j) * ch + c] = sum * 0.25;
            }
        }
    }
    ImageBuffer::new(h2, w2, ch, out).expect("box average stays in range")
}

/// One-channel variant for saliency maps; output clamped to `[0, 1]`.
pub fn warp_saliency(src: &SaliencyMap, grid: &SamplingGrid) -> SaliencyMap {
    let (gh, gw) = grid.dims();
    let img = ImageBuffer::new(src.height(), src.width(), 1, src.values().to_vec())
        .expect("saliency values are valid pixels");
    let warped = warp_image(&img, grid);
    let values = warped.pixels().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    SaliencyMap::new(gh, gw, values).expect("warped values stay in range")
}

/// Bilinear tap with clamp-to-edge. The lerp form keeps constant fields
/// exact and integer positions bit-exact; the final clamp to the tap range
/// guards the convex-combination bound against rounding.
fn sample_bilinear(src: &ImageBuffer, px: f64, py: f64, out: &mut [f64]) {
    let w = src.width();
    let h = src.height();
    let x = px.clamp(0.0, (w - 1) as f64);
    let y = py.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    for (ch, slot) in out.iter_mut().enumerate() {
        let v00 = src.get(y0, x0, ch);
        let v01 = src.get(y0, x1, ch);
        let v10 = src.get(y1, x0, ch);
        let v11 = src.get(y1, x1, ch);
        let top = v00 + fx * (v01 - v00);
        let bot = v10 + fx * (v11 - v10);
        let v = top + fy * (bot - top);
        let lo = v00.min(v01).min(v10).min(v11);
        let hi = v00.max(v01).max(v10).max(v11);
        *slot = v.clamp(lo, hi);
    }
}
