//! Fit TPS control-point displacements to an attention reference grid.
//!
//! The dense grid is linear in the displaced control points: with
//! `B = (L′·L⁻¹)[:, 0..n]`, the grid coordinates are `G = B·V̇` column by
//! column. Minimizing the masked squared distance to a reference grid `G′`
//! plus a ridge term on the displacements is therefore two independent
//! weighted least-squares problems (x and y decouple), solved in closed form
//! through the normal equations. The mask triple follows the map
//! composition: only-small `(1, 0, γ)`, only-large `(0, 1, γ)`, mixed
//! `(1, 0, 0)` so the coupling artifacts of the separable reference sampler
//! never supervise regions they would distort.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::attention::{attention_grid, AttentionSamplerConfig};
use crate::error::{Error, Result};
use crate::geom::{identity_grid, pixel_to_norm, SamplingGrid};
use crate::saliency::{map_composition, MapComposition, SaliencyConfig, SaliencyMap};
use crate::tps::{build_system, solve, ControlGrid, TpsModel, TpsSystem};

/// Per-cell non-negative supervision weights for the grid loss.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMask {
    height: usize,
    width: usize,
    weights: Vec<f64>,
}

impl WeightMask {
    pub fn new(height: usize, width: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask {height}x{width} expects {} weights, got {}",
                height * width,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "mask weights must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            weights,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Build the weight mask for a saliency map at `out_size` (nearest-neighbor
/// resampled), applying the composition's weight triple
/// (small, large, background).
pub fn build_mask(
    map: &SaliencyMap,
    composition: MapComposition,
    gamma: f64,
    out_size: (usize, usize),
    cfg: &SaliencyConfig,
) -> Result<WeightMask> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::Config(format!(
            "gamma must be finite and non-negative, got {gamma}"
        )));
    }
    let (os, ol, bg) = match composition {
        MapComposition::Empty => (0.0, 0.0, 0.0),
        MapComposition::OnlySmall => (1.0, 0.0, gamma),
        MapComposition::OnlyLarge => (0.0, 1.0, gamma),
        MapComposition::Mixed => (1.0, 0.0, 0.0),
    };
    let (oh, ow) = out_size;
    let (sh, sw) = map.dims();
    let mut weights = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        let sr = (((r as f64 + 0.5) * sh as f64 / oh as f64) as usize).min(sh - 1);
        for c in 0..ow {
            let sc = (((c as f64 + 0.5) * sw as f64 / ow as f64) as usize).min(sw - 1);
            let v = map.at(sr, sc);
            let w = if v == cfg.small_label {
                os
            } else if v == cfg.large_label {
                ol
            } else {
                bg
            };
            weights.push(w);
        }
    }
    WeightMask::new(oh, ow, weights)
}

/// Masked grid discrepancy, canonical form: mean over cells of
/// `M(i,j)·‖G(i,j) − G′(i,j)‖²`.
pub fn loss_grid(g: &SamplingGrid, g_prime: &SamplingGrid, mask: &WeightMask) -> Result<f64> {
    Ok(loss_report(g, g_prime, mask)?.squared)
}

/// Both readings of the masked grid discrepancy, each normalized by cell
/// count: `squared` sums `M·‖ΔG‖²` (the canonical, minimizable form) and
/// `unsquared` sums `M·‖ΔG‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub squared: f64,
    pub unsquared: f64,
}

pub fn loss_report(
    g: &SamplingGrid,
    g_prime: &SamplingGrid,
    mask: &WeightMask,
) -> Result<LossReport> {
    if g.dims() != g_prime.dims() || g.dims() != mask.dims() {
        return Err(Error::Dimension(format!(
            "loss_grid shape mismatch: G {:?}, G' {:?}, M {:?}",
            g.dims(),
            g_prime.dims(),
            mask.dims()
        )));
    }
    let mut sq = 0.0;
    let mut un = 0.0;
    for ((a, b), &m) in g
        .coords()
        .iter()
        .zip(g_prime.coords())
        .zip(mask.weights())
    {
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        let d2 = dx * dx + dy * dy;
        sq += m * d2;
        un += m * d2.sqrt();
    }
    let cells = (g.height() * g.width()) as f64;
    Ok(LossReport {
        squared: sq / cells,
        unsquared: un / cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Ridge strength on the displacement normal equations.
    pub ridge_lambda: f64,
    /// Number of TPS control points (a perfect square).
    pub control_points: usize,
    /// Resolution `(height, width)` at which the least-squares problem is
    /// assembled. The fitted model is later rendered at any output size.
    pub work_size: (usize, usize),
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ridge_lambda: 1e-6,
            control_points: 256,
            work_size: (64, 64),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.ridge_lambda.is_finite() || self.ridge_lambda < 0.0 {
            return Err(Error::Config(format!(
                "ridge_lambda must be finite and non-negative, got {}",
                self.ridge_lambda
            )));
        }
        if self.work_size.0 < 2 || self.work_size.1 < 2 {
            return Err(Error::Config(format!(
                "work_size must be at least 2x2, got {:?}",
                self.work_size
            )));
        }
        Ok(())
    }
}

/// Result of one grid fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Control displacements Δ (`n×2`), so `V̇ = Ṗ + Δ`.
    pub delta: DMatrix<f64>,
    pub model: TpsModel,
    /// Canonical masked loss of the fitted dense grid at the working
    /// resolution.
    pub loss: f64,
    /// Un-squared variant of the loss, for diagnostics.
    pub loss_unsquared: f64,
    /// Weighted least-squares residual norm `sqrt(Σ M·‖B·V̇ − G′‖²)` of the
    /// solved linear system, before boundary clamping.
    pub residual_norm: f64,
}

/// Reusable fit context: the TPS system, the dense evaluation basis at the
/// working resolution, and the identity model, all built once per
/// configuration.
pub struct Fitter {
    cfg: FitConfig,
    system: Arc<TpsSystem>,
    /// `B = (L′·L⁻¹)[:, 0..n]` at the working resolution (cells × n).
    basis: DMatrix<f64>,
    /// Lattice positions, n×2.
    p_mat: DMatrix<f64>,
    /// `B·Ṗ` per axis: the zero-displacement grid at the working resolution.
    base: [DVector<f64>; 2],
    identity_model: TpsModel,
}

impl Fitter {
    pub fn new(cfg: FitConfig) -> Result<Self> {
        cfg.validate()?;
        let system = Arc::new(build_system(ControlGrid::new(cfg.control_points)?)?);
        Self::with_system(cfg, system)
    }

    /// Reuse an already-built system (its lattice must match the config).
    pub fn with_system(cfg: FitConfig, system: Arc<TpsSystem>) -> Result<Self> {
        cfg.validate()?;
        if system.n() != cfg.control_points {
            return Err(Error::InvalidInput(format!(
                "system has {} control points, config wants {}",
                system.n(),
                cfg.control_points
            )));
        }
        let (wh, ww) = cfg.work_size;
        let mut coords = Vec::with_capacity(wh * ww);
        for i in 0..wh {
            for j in 0..ww {
                coords.push(pixel_to_norm((j as f64, i as f64), (wh, ww)));
            }
        }
        let basis = system.point_basis(&coords);
        let p_mat = system.control_grid().as_matrix();
        let base_x = &basis * p_mat.column(0);
        let base_y = &basis * p_mat.column(1);
        let identity_model = solve(&system, &p_mat)?;
        Ok(Self {
            cfg,
            system,
            basis,
            p_mat,
            base: [base_x, base_y],
            identity_model,
        })
    }

    pub fn config(&self) -> &FitConfig {
        &self.cfg
    }

    pub fn system(&self) -> &Arc<TpsSystem> {
        &self.system
    }

    /// The zero-displacement result (identity mapping), with zero loss
    /// against itself; used for empty supervision.
    pub fn identity_result(&self) -> FitResult {
        FitResult {
            delta: DMatrix::zeros(self.system.n(), 2),
            model: self.identity_model.clone(),
            loss: 0.0,
            loss_unsquared: 0.0,
            residual_norm: 0.0,
        }
    }

    /// Solve the masked ridge least-squares problem for the displacements
    /// minimizing the grid loss against `g_prime`.
    ///
    /// `g_prime` and `mask` must both be at the working resolution. An
    /// all-zero mask returns the identity result. Solutions never increase
    /// the loss over the zero displacement, and cells with zero weight have
    /// no influence.
    pub fn fit(&self, g_prime: &SamplingGrid, mask: &WeightMask) -> Result<FitResult> {
        let (wh, ww) = self.cfg.work_size;
        if g_prime.dims() != (wh, ww) || mask.dims() != (wh, ww) {
            return Err(Error::Dimension(format!(
                "fit expects working resolution {wh}x{ww}, got G' {:?}, M {:?}",
                g_prime.dims(),
                mask.dims()
            )));
        }
        if mask.total() == 0.0 {
            return Ok(self.identity_result());
        }

        let n = self.system.n();
        let cells = wh * ww;
        let m = mask.weights();

        // weighted normal equations: A = BᵀMB + λI, shared by both axes
        let mut bm = self.basis.clone();
        for (k, &mk) in m.iter().enumerate() {
            if mk != 1.0 {
                for v in bm.row_mut(k).iter_mut() {
                    *v *= mk;
                }
            }
        }
        let mut a = self.basis.tr_mul(&bm);
        if self.cfg.ridge_lambda > 0.0 {
            for i in 0..n {
                a[(i, i)] += self.cfg.ridge_lambda;
            }
        }

        // per-axis right-hand sides BᵀM(g' − B·ṗ)
        let mut rhs = DMatrix::zeros(cells, 2);
        for (k, c) in g_prime.coords().iter().enumerate() {
            rhs[(k, 0)] = m[k] * (c.x - self.base[0][k]);
            rhs[(k, 1)] = m[k] * (c.y - self.base[1][k]);
        }
        let b = self.basis.tr_mul(&rhs);

        let delta = match a.clone().cholesky() {
            Some(chol) => {
                let diag = chol.l_dirty();
                let mut lo = f64::INFINITY;
                let mut hi = 0.0f64;
                for i in 0..n {
                    let d = diag[(i, i)].abs();
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
                let estimate = (hi / lo) * (hi / lo);
                if estimate > 1e14 {
                    return Err(Error::IllConditioned { estimate });
                }
                chol.solve(&b)
            }
            None => {
                let lu = a.lu();
                let diag: Vec<f64> = (0..n).map(|i| lu.u()[(i, i)].abs()).collect();
                let hi = diag.iter().cloned().fold(0.0, f64::max);
                let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
                let estimate = if lo > 0.0 { hi / lo } else { f64::INFINITY };
                if estimate > 1e14 {
                    return Err(Error::IllConditioned { estimate });
                }
                lu.solve(&b).ok_or(Error::IllConditioned { estimate })?
            }
        };

        let v_dot = &self.p_mat + &delta;
        let model = solve(&self.system, &v_dot)?;

        // linear-system residual (pre-clamp), the quantity the solve minimizes
        let pred = &self.basis * &v_dot;
        let mut wsse = 0.0;
        for (k, c) in g_prime.coords().iter().enumerate() {
            let dx = pred[(k, 0)] - c.x;
            let dy = pred[(k, 1)] - c.y;
            wsse += m[k] * (dx * dx + dy * dy);
        }

        let work_grid = model.dense_grid(wh, ww)?;
        let report = loss_report(&work_grid, g_prime, mask)?;
        Ok(FitResult {
            delta,
            model,
            loss: report.squared,
            loss_unsquared: report.unsquared,
            residual_norm: wsse.sqrt(),
        })
    }
}

/// One-shot fit; builds the system for `cfg` each call. Use [`Fitter`] when
/// fitting repeatedly with the same configuration.
pub fn fit(g_prime: &SamplingGrid, mask: &WeightMask, cfg: &FitConfig) -> Result<FitResult> {
    Fitter::new(cfg.clone())?.fit(g_prime, mask)
}

/// Full resampling path: map composition → attention reference grid →
/// weight mask → displacement fit → dense grid at `out_size`.
///
/// Empty maps short-circuit to the exact identity grid.
pub fn saliency_to_grid(
    map: &SaliencyMap,
    fitter: &Fitter,
    sampler_cfg: &AttentionSamplerConfig,
    saliency_cfg: &SaliencyConfig,
    gamma: f64,
    out_size: (usize, usize),
) -> Result<(SamplingGrid, FitResult)> {
    let composition = map_composition(map, saliency_cfg);
    if composition == MapComposition::Empty {
        return Ok((
            identity_grid(out_size.0, out_size.1)?,
            fitter.identity_result(),
        ));
    }
    let work = fitter.config().work_size;
    let sampler = AttentionSamplerConfig {
        out_size: work,
        ..sampler_cfg.clone()
    };
    let reference = attention_grid(map, &sampler)?;
    let mask = build_mask(map, composition, gamma, work, saliency_cfg)?;
    let result = fitter.fit(&reference, &mask)?;
    let grid = result.model.dense_grid(out_size.0, out_size.1)?;
    Ok((grid, result))
}
