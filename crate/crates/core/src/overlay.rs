//! Static diagnostic overlays: deformation-field lines and detection boxes.

use crate::detection::Detection;
use crate::geom::{norm_to_pixel, SamplingGrid};
use crate::image::ImageBuffer;

const FIELD_COLOR: [f64; 3] = [0.1, 0.9, 0.2];
const BOX_COLOR: [f64; 3] = [0.95, 0.15, 0.1];

/// Draw the deformation field over the image: every `stride`-th grid row and
/// column becomes a polyline through the source positions the grid samples.
/// Straight lines mean an identity mapping; lines bunch up where the grid
/// magnifies.
pub fn render_grid_overlay(base: &ImageBuffer, grid: &SamplingGrid, stride: usize) -> ImageBuffer {
    let mut img = base.to_rgb();
    let stride = stride.max(1);
    let dims = base.dims();
    let (gh, gw) = grid.dims();
    for i in (0..gh).step_by(stride).chain(std::iter::once(gh - 1)) {
        for j in 1..gw {
            let a = norm_to_pixel(grid.at(i, j - 1), dims);
            let b = norm_to_pixel(grid.at(i, j), dims);
            draw_line(&mut img, a, b, FIELD_COLOR);
        }
    }
    for j in (0..gw).step_by(stride).chain(std::iter::once(gw - 1)) {
        for i in 1..gh {
            let a = norm_to_pixel(grid.at(i - 1, j), dims);
            let b = norm_to_pixel(grid.at(i, j), dims);
            draw_line(&mut img, a, b, FIELD_COLOR);
        }
    }
    img
}

/// Draw detection rectangles over the image.
pub fn render_detections_overlay(base: &ImageBuffer, dets: &[Detection]) -> ImageBuffer {
    let mut img = base.to_rgb();
    for det in dets {
        let b = det.bbox;
        draw_line(&mut img, (b.x_min, b.y_min), (b.x_max, b.y_min), BOX_COLOR);
        draw_line(&mut img, (b.x_max, b.y_min), (b.x_max, b.y_max), BOX_COLOR);
        draw_line(&mut img, (b.x_max, b.y_max), (b.x_min, b.y_max), BOX_COLOR);
        draw_line(&mut img, (b.x_min, b.y_max), (b.x_min, b.y_min), BOX_COLOR);
    }
    img
}

fn draw_line(img: &mut ImageBuffer, a: (f64, f64), b: (f64, f64), color: [f64; 3]) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let x = a.0 + t * (b.0 - a.0);
        let y = a.1 + t * (b.1 - a.1);
        put_pixel(img, x, y, color);
    }
}

fn put_pixel(img: &mut ImageBuffer, x: f64, y: f64, color: [f64; 3]) {
    let xi = x.round();
    let yi = y.round();
    if xi < 0.0 || yi < 0.0 || xi >= img.width() as f64 || yi >= img.height() as f64 {
        return;
    }
    let (r, c) = (yi as usize, xi as usize);
    for (ch, &v) in color.iter().enumerate() {
        img.set(r, c, ch, v);
    }
}
