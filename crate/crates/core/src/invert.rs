//! Map detections from resampled-image coordinates back to the original
//! image by interpolating the deformation grid.

use crate::detection::{BBox, CoordSpace, Detection};
use crate::error::{Error, Result};
use crate::geom::{norm_to_pixel, pixel_to_norm, SamplingGrid};

/// Interpolate the grid at the fractional resampled position `q = (x, y)`
/// and convert the sampled source coordinate to original pixels.
///
/// Interpolation is linear per axis over the two closest cells of each axis
/// (bilinear over the four surrounding nodes). Positions outside the grid
/// are clamped to the boundary cell; the flag reports whether that happened.
pub fn invert_point(
    q: (f64, f64),
    grid: &SamplingGrid,
    original_dims: (usize, usize),
) -> ((f64, f64), bool) {
    let max_x = (grid.width() - 1) as f64;
    let max_y = (grid.height() - 1) as f64;
    let clamped = q.0 < 0.0 || q.0 > max_x || q.1 < 0.0 || q.1 > max_y;
    let src = grid.bilinear_at(q.0, q.1);
    (norm_to_pixel(src, original_dims), clamped)
}

/// Per-axis-only variant: x is interpolated along the row nearest to `q`,
/// y down the column nearest to `q` (two closest cells per axis, taken
/// literally instead of the bilinear reading).
pub fn invert_point_per_axis(
    q: (f64, f64),
    grid: &SamplingGrid,
    original_dims: (usize, usize),
) -> (f64, f64) {
    let x = q.0.clamp(0.0, (grid.width() - 1) as f64);
    let y = q.1.clamp(0.0, (grid.height() - 1) as f64);
    let xr = x.round() as usize;
    let yr = y.round() as usize;
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(grid.width() - 1);
    let y1 = (y0 + 1).min(grid.height() - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let sx = grid.at(yr, x0).x + fx * (grid.at(yr, x1).x - grid.at(yr, x0).x);
    let sy = grid.at(y0, xr).y + fy * (grid.at(y1, xr).y - grid.at(y0, xr).y);
    norm_to_pixel(
        crate::geom::NormCoord { x: sx, y: sy },
        original_dims,
    )
}

/// Detections mapped back to original coordinates, plus counts of boxes
/// dropped (degenerate after clamping) and of corner lookups that fell
/// outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedDetections {
    pub detections: Vec<Detection>,
    pub dropped: usize,
    pub clamped_corners: usize,
}

/// Map every detection's box corners through [`invert_point`] and take the
/// axis-aligned hull. Scores and categories are preserved; the space tag
/// becomes Original. Boxes are clamped to the original image bounds and
/// dropped (counted) if nothing remains.
pub fn invert_detections(
    dets: &[Detection],
    grid: &SamplingGrid,
    grid_id: u64,
    original_dims: (usize, usize),
) -> Result<InvertedDetections> {
    let mut out = Vec::with_capacity(dets.len());
    let mut dropped = 0;
    let mut clamped_corners = 0;
    for det in dets {
        match det.space {
            CoordSpace::Resampled { grid_id: g } if g == grid_id => {}
            CoordSpace::Resampled { grid_id: g } => {
                return Err(Error::GridMismatch {
                    expected: grid_id,
                    found: g,
                });
            }
            CoordSpace::Original => {
                return Err(Error::InvalidInput(
                    "invert_detections expects resampled-space detections".into(),
                ));
            }
        }
        let mut mapped = [(0.0, 0.0); 4];
        for (slot, corner) in mapped.iter_mut().zip(det.bbox.corners()) {
            let (p, clamped) = invert_point(corner, grid, original_dims);
            *slot = p;
            clamped_corners += clamped as usize;
        }
        let hull = match BBox::hull(&mapped) {
            Ok(h) => h,
            Err(_) => {
                dropped += 1;
                continue;
            }
        };
        match hull.clamp_to(original_dims) {
            Some(bbox) => out.push(Detection {
                bbox,
                score: det.score,
                category: det.category,
                space: CoordSpace::Original,
            }),
            None => dropped += 1,
        }
    }
    Ok(InvertedDetections {
        detections: out,
        dropped,
        clamped_corners,
    })
}

/// Resampled-image position of an original-image point: the numerical
/// inverse of the grid mapping.
///
/// Starts from the uniform-scaling guess and runs Newton iterations on the
/// bilinear grid interpolation. If that stalls (fitted grids can fold
/// locally where the reference sampler's density jumps), every cell whose
/// corner hull contains the target is solved exactly — the bilinear patch
/// inverse reduces to a quadratic — and the solution nearest the uniform
/// guess wins. Returns `None` when no grid position maps to the requested
/// source point (its preimage falls outside the grid).
pub fn forward_point(
    p: (f64, f64),
    grid: &SamplingGrid,
    original_dims: (usize, usize),
) -> Option<(f64, f64)> {
    let target = pixel_to_norm(p, original_dims);
    let tol = 1e-10;
    let start = (
        (target.x + 1.0) * 0.5 * (grid.width() - 1) as f64,
        (target.y + 1.0) * 0.5 * (grid.height() - 1) as f64,
    );
    if let Some(q) = newton_solve(grid, target, start, tol) {
        return Some(q);
    }
    let mut best: Option<(f64, f64)> = None;
    let mut best_d2 = f64::INFINITY;
    for i in 0..grid.height() - 1 {
        for j in 0..grid.width() - 1 {
            if let Some((fx, fy)) = solve_in_cell(grid, i, j, target) {
                let q = (j as f64 + fx, i as f64 + fy);
                let d2 = (q.0 - start.0).powi(2) + (q.1 - start.1).powi(2);
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = Some(q);
                }
            }
        }
    }
    best
}

/// Exact inverse of one bilinear patch: in-cell fractions `(fx, fy)` with
/// `patch(fx, fy) = target`, or `None` if the cell does not cover it.
fn solve_in_cell(
    grid: &SamplingGrid,
    i: usize,
    j: usize,
    target: crate::geom::NormCoord,
) -> Option<(f64, f64)> {
    let c00 = grid.at(i, j);
    let c01 = grid.at(i, j + 1);
    let c10 = grid.at(i + 1, j);
    let c11 = grid.at(i + 1, j + 1);
    // quick reject on the corner hull
    let eps = 1e-12;
    let xs = [c00.x, c01.x, c10.x, c11.x];
    let ys = [c00.y, c01.y, c10.y, c11.y];
    let (lo, hi) = (
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    if target.x < lo - eps || target.x > hi + eps {
        return None;
    }
    let (lo, hi) = (
        ys.iter().cloned().fold(f64::INFINITY, f64::min),
        ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    if target.y < lo - eps || target.y > hi + eps {
        return None;
    }

    // patch(fx, fy) = c00 + fx·A + fy·B + fx·fy·C = target, i.e.
    // D = fx·A + fy·B + fx·fy·C; eliminating fx yields a quadratic in fy
    let ax = c01.x - c00.x;
    let ay = c01.y - c00.y;
    let bx = c10.x - c00.x;
    let by = c10.y - c00.y;
    let cx = c11.x - c10.x - ax;
    let cy = c11.y - c10.y - ay;
    let dx = target.x - c00.x;
    let dy = target.y - c00.y;

    let qa = bx * cy - by * cx;
    let qb = dy * cx - dx * cy + bx * ay - by * ax;
    let qc = dy * ax - dx * ay;

    let range = -1e-9..=1.0 + 1e-9;
    let check = |fy: f64| -> Option<(f64, f64)> {
        if !range.contains(&fy) {
            return None;
        }
        let denom = ax + fy * cx;
        let fx = if denom.abs() > 1e-15 {
            (dx - fy * bx) / denom
        } else {
            let denom_y = ay + fy * cy;
            if denom_y.abs() <= 1e-15 {
                return None;
            }
            (dy - fy * by) / denom_y
        };
        if !range.contains(&fx) {
            return None;
        }
        Some((fx.clamp(0.0, 1.0), fy.clamp(0.0, 1.0)))
    };

    if qa.abs() < 1e-15 {
        if qb.abs() < 1e-15 {
            return check(0.0);
        }
        return check(-qc / qb);
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable root pairing
    let q = -0.5 * (qb + qb.signum() * sq);
    let r1 = q / qa;
    let r2 = if q.abs() > 1e-300 { qc / q } else { r1 };
    check(r1).or_else(|| check(r2))
}

fn newton_solve(
    grid: &SamplingGrid,
    target: crate::geom::NormCoord,
    start: (f64, f64),
    tol: f64,
) -> Option<(f64, f64)> {
    let w1 = (grid.width() - 1) as f64;
    let h1 = (grid.height() - 1) as f64;
    // allow a small margin outside the grid during iteration so border
    // targets can be bracketed, then require an in-bounds solution
    let lo = -1.5;
    let (mut qx, mut qy) = start;
    for _ in 0..60 {
        qx = qx.clamp(lo, w1 + 1.5);
        qy = qy.clamp(lo, h1 + 1.5);
        let (cell_x, cell_y, fx, fy) = locate(qx, qy, w1, h1);
        let (i, j) = (cell_y, cell_x);
        let c00 = grid.at(i, j);
        let c01 = grid.at(i, j + 1);
        let c10 = grid.at(i + 1, j);
        let c11 = grid.at(i + 1, j + 1);
        let top_x = c00.x + fx * (c01.x - c00.x);
        let bot_x = c10.x + fx * (c11.x - c10.x);
        let top_y = c00.y + fx * (c01.y - c00.y);
        let bot_y = c10.y + fx * (c11.y - c10.y);
        let gx = top_x + fy * (bot_x - top_x);
        let gy = top_y + fy * (bot_y - top_y);
        let ex = gx - target.x;
        let ey = gy - target.y;
        if ex.abs() < tol && ey.abs() < tol {
            if qx >= -1e-6 && qx <= w1 + 1e-6 && qy >= -1e-6 && qy <= h1 + 1e-6 {
                return Some((qx.clamp(0.0, w1), qy.clamp(0.0, h1)));
            }
            return None;
        }
        // analytic Jacobian of the bilinear patch
        let dxx = (c01.x - c00.x) + fy * ((c11.x - c10.x) - (c01.x - c00.x));
        let dxy = bot_x - top_x;
        let dyx = (c01.y - c00.y) + fy * ((c11.y - c10.y) - (c01.y - c00.y));
        let dyy = bot_y - top_y;
        let det = dxx * dyy - dxy * dyx;
        if det.abs() < 1e-18 {
            return None;
        }
        let sx = (ex * dyy - ey * dxy) / det;
        let sy = (ey * dxx - ex * dyx) / det;
        // damp long steps; bilinear patches are only locally valid
        let step = 1.0f64.min(2.0 / (sx.abs() + sy.abs() + 1e-12));
        qx -= sx * step;
        qy -= sy * step;
    }
    None
}

/// Cell indices and in-cell fractions for a (possibly out-of-range) grid
/// position, extending the border cells outward.
fn locate(qx: f64, qy: f64, w1: f64, h1: f64) -> (usize, usize, f64, f64) {
    let cx = qx.clamp(0.0, w1 - 1e-9).floor().clamp(0.0, w1 - 1.0);
    let cy = qy.clamp(0.0, h1 - 1e-9).floor().clamp(0.0, h1 - 1.0);
    (cx as usize, cy as usize, qx - cx, qy - cy)
}
