//! Thin-plate-spline interpolation on a lattice of control points.
//!
//! A TPS maps the plane through a global affine part plus radial terms:
//!
//! ```text
//! f_x'(x, y) = a1 + a2·x + a3·y + Σ_i α_i · U(‖p_i − (x, y)‖)
//! f_y'(x, y) = a4 + a5·x + a6·y + Σ_i β_i · U(‖p_i − (x, y)‖)
//! ```
//!
//! with kernel `U(r) = r²·log(r)` (natural log; any other base only rescales
//! the coefficients and leaves the interpolant unchanged). Prescribing the
//! images `V̇` of the `n` control points `Ṗ` determines all coefficients
//! through the linear system `L·W = V` where
//!
//! ```text
//! L = [ K  P ]      K_ij = U(‖p_i − p_j‖)     P row i = [1, x_i, y_i]
//!     [ Pᵀ O ]      V = [ V̇ ; 0₃ₓ₂ ]
//! ```
//!
//! The three zero rows of `V` force the orthogonality side conditions
//! `Σα_i = Σα_i·x_i = Σα_i·y_i = 0` (same for β), so the radial part carries
//! no affine component. `L` depends only on the lattice and is factorized
//! once; solving for new displacements is two matrix-vector products.

use std::sync::Arc;

use nalgebra::{DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::geom::{pixel_to_norm, NormCoord, SamplingGrid};

/// Above this condition estimate the cached inverse is not trusted and
/// solves go through the pivoted LU factorization instead.
const COND_DIRECT_SOLVE: f64 = 1e10;

/// Kernel on the squared distance: `U(r) = r²·log(r) = d²·log(d²)/2`.
/// Defined as 0 at the origin (the limit value).
#[inline]
pub(crate) fn kernel_sq_dist(d2: f64) -> f64 {
    if d2 == 0.0 {
        0.0
    } else {
        0.5 * d2 * d2.ln()
    }
}

/// The radial basis kernel `U(r) = r²·log(r)`, with `U(0) = 0`.
pub fn radial_basis(r: f64) -> Result<f64> {
    if !r.is_finite() || r < 0.0 {
        return Err(Error::Domain(format!(
            "radial basis requires finite r >= 0, got {r}"
        )));
    }
    Ok(kernel_sq_dist(r * r))
}

/// A uniform, corner-aligned `g×g` lattice of control points over `[-1, 1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    side: usize,
    points: Vec<NormCoord>,
}

impl ControlGrid {
    /// Build from the total point count `n`, which must be a perfect square
    /// of a side length of at least 2.
    pub fn new(n: usize) -> Result<Self> {
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n {
            return Err(Error::Dimension(format!(
                "control point count {n} is not a perfect square"
            )));
        }
        Self::from_side(side)
    }

    pub fn from_side(side: usize) -> Result<Self> {
        if side < 2 {
            return Err(Error::Dimension(format!(
                "control lattice side must be at least 2, got {side}"
            )));
        }
        let mut points = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                points.push(pixel_to_norm((j as f64, i as f64), (side, side)));
            }
        }
        Ok(Self { side, points })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[NormCoord] {
        &self.points
    }

    /// Control point positions as an `n×2` matrix (x in column 0).
    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 2, |i, c| {
            if c == 0 {
                self.points[i].x
            } else {
                self.points[i].y
            }
        })
    }
}

impl Default for ControlGrid {
    fn default() -> Self {
        Self::new(256).expect("16x16 lattice")
    }
}

/// The assembled and factorized interpolation system for one lattice.
///
/// Immutable after construction and safe to share across threads (models
/// hold it behind an `Arc`).
pub struct TpsSystem {
    grid: ControlGrid,
    k: DMatrix<f64>,
    l: DMatrix<f64>,
    l_inv: DMatrix<f64>,
    lu: nalgebra::LU<f64, Dyn, Dyn>,
    cond_estimate: f64,
}

impl std::fmt::Debug for TpsSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TpsSystem")
            .field("n", &self.grid.len())
            .field("cond_estimate", &self.cond_estimate)
            .finish()
    }
}

/// Assemble K, P, L for the lattice, invert L, and record a condition
/// estimate from the pivoted factorization.
pub fn build_system(grid: ControlGrid) -> Result<TpsSystem> {
    let n = grid.len();
    let pts = grid.points();

    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = pts[i].x - pts[j].x;
            let dy = pts[i].y - pts[j].y;
            let u = kernel_sq_dist(dx * dx + dy * dy);
            k[(i, j)] = u;
            k[(j, i)] = u;
        }
    }

    let mut l = DMatrix::zeros(n + 3, n + 3);
    l.view_mut((0, 0), (n, n)).copy_from(&k);
    for i in 0..n {
        l[(i, n)] = 1.0;
        l[(i, n + 1)] = pts[i].x;
        l[(i, n + 2)] = pts[i].y;
        l[(n, i)] = 1.0;
        l[(n + 1, i)] = pts[i].x;
        l[(n + 2, i)] = pts[i].y;
    }

    let lu = l.clone().lu();
    let diag: Vec<f64> = (0..n + 3).map(|i| lu.u()[(i, i)].abs()).collect();
    let max_d = diag.iter().cloned().fold(0.0, f64::max);
    let min_d = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_d == 0.0 || !min_d.is_finite() {
        return Err(Error::SingularSystem(format!(
            "TPS system for n={n} is singular"
        )));
    }
    let cond_estimate = max_d / min_d;
    let l_inv = lu
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem(format!("TPS system for n={n} is singular")))?;

    Ok(TpsSystem {
        grid,
        k,
        l,
        l_inv,
        lu,
        cond_estimate,
    })
}

impl TpsSystem {
    pub fn control_grid(&self) -> &ControlGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn k_matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn l_matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn l_inverse(&self) -> &DMatrix<f64> {
        &self.l_inv
    }

    pub fn condition_estimate(&self) -> f64 {
        self.cond_estimate
    }

    /// Columns `0..n` of `L′·L⁻¹` for dense evaluation points, i.e. the
    /// matrix mapping displaced control points directly to grid coordinates.
    pub(crate) fn point_basis(&self, coords: &[NormCoord]) -> DMatrix<f64> {
        let lp = dense_rows(self.grid.points(), coords);
        let b = &lp * &self.l_inv;
        b.columns(0, self.n()).into_owned()
    }
}

/// Solve `L·W = [V̇; 0]` for the coefficients of the spline mapping the
/// lattice points onto `v_dot` (absolute positions, `n×2`).
pub fn solve(system: &Arc<TpsSystem>, v_dot: &DMatrix<f64>) -> Result<TpsModel> {
    let n = system.n();
    if v_dot.nrows() != n || v_dot.ncols() != 2 {
        return Err(Error::InvalidInput(format!(
            "displaced points must be {n}x2, got {}x{}",
            v_dot.nrows(),
            v_dot.ncols()
        )));
    }
    if v_dot.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "non-finite displaced control point".into(),
        ));
    }

    let mut rhs = DMatrix::zeros(n + 3, 2);
    rhs.view_mut((0, 0), (n, 2)).copy_from(v_dot);

    let w = if system.cond_estimate > COND_DIRECT_SOLVE {
        system
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("LU solve failed".into()))?
    } else {
        &system.l_inv * &rhs
    };

    Ok(TpsModel {
        system: Arc::clone(system),
        v_dot: v_dot.clone(),
        w,
    })
}

/// A solved spline: the system it was built on, the displaced control
/// points, and the `(n+3)×2` coefficient matrix (radial rows first, then the
/// affine rows `(a1,a4), (a2,a5), (a3,a6)`).
#[derive(Debug, Clone)]
pub struct TpsModel {
    system: Arc<TpsSystem>,
    v_dot: DMatrix<f64>,
    w: DMatrix<f64>,
}

impl TpsModel {
    pub fn system(&self) -> &Arc<TpsSystem> {
        &self.system
    }

    pub fn displaced_points(&self) -> &DMatrix<f64> {
        &self.v_dot
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Evaluate the spline at one point.
    pub fn evaluate(&self, q: NormCoord) -> NormCoord {
        let n = self.system.n();
        let pts = self.system.grid.points();
        let w = &self.w;
        let mut x = w[(n, 0)] + w[(n + 1, 0)] * q.x + w[(n + 2, 0)] * q.y;
        let mut y = w[(n, 1)] + w[(n + 1, 1)] * q.x + w[(n + 2, 1)] * q.y;
        for (i, p) in pts.iter().enumerate() {
            let dx = p.x - q.x;
            let dy = p.y - q.y;
            let u = kernel_sq_dist(dx * dx + dy * dy);
            x += w[(i, 0)] * u;
            y += w[(i, 1)] * u;
        }
        NormCoord { x, y }
    }

    /// Evaluate the spline over the whole identity lattice of an output
    /// image, as the matrix product of dense kernel rows with the
    /// coefficients. Coordinates exceeding `[-1, 1]` are clamped and flagged.
    ///
    /// Rows are processed in chunks so the dense kernel matrix never
    /// materializes for large outputs.
    pub fn dense_grid(&self, height: usize, width: usize) -> Result<SamplingGrid> {
        if height < 2 || width < 2 {
            return Err(Error::Dimension(format!(
                "dense grid dimensions must be at least 2x2, got {height}x{width}"
            )));
        }
        let mut coords = Vec::with_capacity(height * width);
        let chunk_rows = (1 << 16) / width.max(1) + 1;
        let mut row_coords = Vec::with_capacity(chunk_rows * width);
        let mut i = 0;
        while i < height {
            let rows = chunk_rows.min(height - i);
            row_coords.clear();
            for r in i..i + rows {
                for j in 0..width {
                    row_coords.push(pixel_to_norm((j as f64, r as f64), (height, width)));
                }
            }
            let lp = dense_rows(self.system.grid.points(), &row_coords);
            let g = &lp * &self.w;
            for k in 0..rows * width {
                coords.push(NormCoord {
                    x: g[(k, 0)],
                    y: g[(k, 1)],
                });
            }
            i += rows;
        }
        SamplingGrid::from_raw(height, width, coords)
    }

    /// Quadratic form of the radial coefficients against K, summed over both
    /// axes. Grows with the roughness of the interpolant.
    pub fn bending_energy(&self) -> f64 {
        let n = self.system.n();
        let w_loc = self.w.rows(0, n);
        let kw = &self.system.k * w_loc;
        let mut e = 0.0;
        for c in 0..2 {
            for i in 0..n {
                e += w_loc[(i, c)] * kw[(i, c)];
            }
        }
        e
    }
}

/// Dense kernel rows: row k is `[U(‖q_k − p_1‖) … U(‖q_k − p_n‖), 1, x_k, y_k]`.
pub(crate) fn dense_rows(points: &[NormCoord], queries: &[NormCoord]) -> DMatrix<f64> {
    let n = points.len();
    let m = queries.len();
    let mut lp = DMatrix::zeros(m, n + 3);
    for (k, q) in queries.iter().enumerate() {
        for (i, p) in points.iter().enumerate() {
            let dx = p.x - q.x;
            let dy = p.y - q.y;
            lp[(k, i)] = kernel_sq_dist(dx * dx + dy * dy);
        }
        lp[(k, n)] = 1.0;
        lp[(k, n + 1)] = q.x;
        lp[(k, n + 2)] = q.y;
    }
    lp
}
