//! Non-parametric attention-based sampling grid.
//!
//! The saliency map is reduced to one marginal density per axis (max or sum
//! over the other axis, plus a uniform floor so the CDF is strictly
//! increasing even on empty maps). Grid coordinates are the inverse CDFs at
//! uniformly spaced quantiles, which packs samples densely where the
//! marginal mass is. The construction is separable, so mass at (i, j) and
//! (i', j') also attracts samples at (i, j') and (i', j) — the known
//! row/column coupling artifact of this sampler family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{NormCoord, SamplingGrid};
use crate::saliency::SaliencyMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalMode {
    /// Reduce across the other axis with max (structure preserving).
    Max,
    /// Reduce across the other axis with sum.
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionSamplerConfig {
    /// Uniform density floor added to every bin before normalization.
    /// Must be positive; it guarantees strictly increasing CDFs.
    pub floor_eps: f64,
    pub marginal_mode: MarginalMode,
    /// Output grid size `(height, width)`.
    pub out_size: (usize, usize),
}

impl Default for AttentionSamplerConfig {
    fn default() -> Self {
        Self {
            floor_eps: 0.01,
            marginal_mode: MarginalMode::Max,
            out_size: (64, 64),
        }
    }
}

impl AttentionSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let eps_ok = self.floor_eps.is_finite() && self.floor_eps > 0.0;
        if !eps_ok {
            return Err(Error::Config(format!(
                "floor_eps must be positive and finite, got {}",
                self.floor_eps
            )));
        }
        if self.out_size.0 < 2 || self.out_size.1 < 2 {
            return Err(Error::Config(format!(
                "sampler out_size must be at least 2x2, got {:?}",
                self.out_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// A strictly increasing piecewise-linear CDF over the bins of one axis.
///
/// `edges` has `bins + 1` entries, anchored at 0 and terminating at exactly 1.
/// Bin `k` covers the normalized-coordinate interval
/// `[-1 + 2k/bins, -1 + 2(k+1)/bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCdf {
    axis: Axis,
    edges: Vec<f64>,
}

impl MarginalCdf {
    fn from_densities(axis: Axis, raw: &[f64], floor_eps: f64) -> Self {
        let mut prefix = Vec::with_capacity(raw.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &d in raw {
            acc += d + floor_eps;
            prefix.push(acc);
        }
        let total = acc;
        let edges: Vec<f64> = prefix.iter().map(|&p| p / total).collect();
        debug_assert!(edges.windows(2).all(|w| w[1] > w[0]));
        Self { axis, edges }
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// CDF value at a normalized coordinate in `[-1, 1]`.
    pub fn cdf(&self, coord: f64) -> f64 {
        let bins = self.bins() as f64;
        let u = ((coord + 1.0) * 0.5 * bins).clamp(0.0, bins);
        let k = (u.floor() as usize).min(self.bins() - 1);
        let frac = u - k as f64;
        self.edges[k] + frac * (self.edges[k + 1] - self.edges[k])
    }

    /// Inverse CDF: quantile in `[0, 1]` to normalized coordinate in
    /// `[-1, 1]`, by binary search over the edges with in-bin linear
    /// interpolation.
    pub fn inverse(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let bins = self.bins();
        // last edge index k with edges[k] <= q, capped to a valid bin
        let mut lo = 0usize;
        let mut hi = bins;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.edges[mid] <= q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let span = self.edges[lo + 1] - self.edges[lo];
        let u = lo as f64 + (q - self.edges[lo]) / span;
        -1.0 + 2.0 * u / bins as f64
    }
}

/// Marginal CDFs of a saliency map along X (reducing over rows) and Y
/// (reducing over columns).
pub fn marginals(map: &SaliencyMap, cfg: &AttentionSamplerConfig) -> (MarginalCdf, MarginalCdf) {
    let (h, w) = map.dims();
    let reduce = |acc: f64, v: f64| match cfg.marginal_mode {
        MarginalMode::Max => acc.max(v),
        MarginalMode::Sum => acc + v,
    };
    let mut dx = vec![0.0; w];
    let mut dy = vec![0.0; h];
    for (r, row_acc) in dy.iter_mut().enumerate() {
        for (c, col_acc) in dx.iter_mut().enumerate() {
            let v = map.at(r, c);
            *col_acc = reduce(*col_acc, v);
            *row_acc = reduce(*row_acc, v);
        }
    }
    (
        MarginalCdf::from_densities(Axis::X, &dx, cfg.floor_eps),
        MarginalCdf::from_densities(Axis::Y, &dy, cfg.floor_eps),
    )
}

/// The attention sampling grid: output cell (row i, col j) samples the
/// source at `(Fx⁻¹(u_j), Fy⁻¹(v_i))` for uniformly spaced quantiles
/// `u_j`, `v_i`. Separable by construction: x-coordinates are shared down
/// each column, y-coordinates across each row.
pub fn attention_grid(map: &SaliencyMap, cfg: &AttentionSamplerConfig) -> Result<SamplingGrid> {
    cfg.validate()?;
    let (oh, ow) = cfg.out_size;
    let (fx, fy) = marginals(map, cfg);
    let xs: Vec<f64> = (0..ow)
        .map(|j| fx.inverse(j as f64 / (ow - 1) as f64))
        .collect();
    let ys: Vec<f64> = (0..oh)
        .map(|i| fy.inverse(i as f64 / (oh - 1) as f64))
        .collect();
    let mut coords = Vec::with_capacity(oh * ow);
    for &y in &ys {
        for &x in &xs {
            coords.push(NormCoord { x, y });
        }
    }
    SamplingGrid::new(oh, ow, coords, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::identity_grid;
    use proptest::prelude::*;

    fn uniform_map(h: usize, w: usize) -> SaliencyMap {
        SaliencyMap::filled(h, w, 0.0).unwrap()
    }

    #[test]
    fn empty_map_gives_linear_cdfs() {
        let cfg = AttentionSamplerConfig::default();
        let (fx, fy) = marginals(&uniform_map(128, 128), &cfg);
        for (k, &e) in fx.edges().iter().enumerate() {
            let expect = k as f64 / 128.0;
            assert!((e - expect).abs() < 1e-12);
        }
        assert_eq!(fy.bins(), 128);
        assert_eq!(*fx.edges().last().unwrap(), 1.0);
    }

    #[test]
    fn single_bright_column_density() {
        let cfg = AttentionSamplerConfig::default();
        let mut vals = vec![0.0; 128 * 128];
        for r in 0..128 {
            vals[r * 128 + 40] = 1.0;
        }
        let map = SaliencyMap::new(128, 128, vals).unwrap();
        let (fx, _) = marginals(&map, &cfg);
        let eps = 0.01;
        let total = 1.0 + 128.0 * eps;
        // oracle: direct normalization arithmetic
        let bright = (fx.edges()[41] - fx.edges()[40]) * total;
        assert!((bright - (1.0 + eps)).abs() < 1e-12);
        let dark = (fx.edges()[10] - fx.edges()[9]) * total;
        assert!((dark - eps).abs() < 1e-12);
    }

    #[test]
    fn sum_and_max_modes_rank_columns_differently() {
        // column 10: every row at 0.5; column 50: a single 1.0 pixel.
        // Max ranks the bright pixel higher, Sum ranks the solid column.
        let mut vals = vec![0.0; 64 * 64];
        for r in 0..64 {
            vals[r * 64 + 10] = 0.5;
        }
        vals[20 * 64 + 50] = 1.0;
        let map = SaliencyMap::new(64, 64, vals).unwrap();
        let density = |cdf: &MarginalCdf, j: usize| cdf.edges()[j + 1] - cdf.edges()[j];

        let max_cfg = AttentionSamplerConfig::default();
        let (fx, _) = marginals(&map, &max_cfg);
        assert!(density(&fx, 50) > density(&fx, 10));

        let sum_cfg = AttentionSamplerConfig {
            marginal_mode: MarginalMode::Sum,
            ..Default::default()
        };
        let (fx, _) = marginals(&map, &sum_cfg);
        assert!(density(&fx, 10) > density(&fx, 50));
    }

    #[test]
    fn transpose_swaps_marginals() {
        let cfg = AttentionSamplerConfig::default();
        let mut vals = vec![0.0; 64 * 64];
        for r in 20..30 {
            for c in 5..12 {
                vals[r * 64 + c] = 1.0;
            }
        }
        let map = SaliencyMap::new(64, 64, vals.clone()).unwrap();
        let mut tvals = vec![0.0; 64 * 64];
        for r in 0..64 {
            for c in 0..64 {
                tvals[c * 64 + r] = vals[r * 64 + c];
            }
        }
        let tmap = SaliencyMap::new(64, 64, tvals).unwrap();
        let (fx, fy) = marginals(&map, &cfg);
        let (tfx, tfy) = marginals(&tmap, &cfg);
        assert_eq!(fx.edges(), tfy.edges());
        assert_eq!(fy.edges(), tfx.edges());
    }

    #[test]
    fn uniform_map_gives_identity_grid() {
        let cfg = AttentionSamplerConfig {
            out_size: (48, 48),
            ..Default::default()
        };
        let g = attention_grid(&uniform_map(128, 128), &cfg).unwrap();
        let id = identity_grid(48, 48).unwrap();
        for (a, b) in g.coords().iter().zip(id.coords()) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        }
    }

    #[test]
    fn bright_square_attracts_samples() {
        // a 13x13 bright square is 10% of the linear extent per axis; the
        // share of samples landing inside must exceed 10%
        let cfg = AttentionSamplerConfig {
            out_size: (128, 128),
            ..Default::default()
        };
        let mut vals = vec![0.0; 128 * 128];
        for r in 60..73 {
            for c in 60..73 {
                vals[r * 128 + c] = 1.0;
            }
        }
        let map = SaliencyMap::new(128, 128, vals).unwrap();
        let g = attention_grid(&map, &cfg).unwrap();
        // source extent of the square in normalized coordinates (bin edges)
        let x_lo = -1.0 + 2.0 * 60.0 / 128.0;
        let x_hi = -1.0 + 2.0 * 73.0 / 128.0;
        let inside_x = (0..128)
            .filter(|&j| {
                let x = g.at(0, j).x;
                x >= x_lo && x <= x_hi
            })
            .count();
        assert!(
            inside_x as f64 / 128.0 > 0.10,
            "only {inside_x}/128 samples in the bright band"
        );
        // brute-force inverse-CDF oracle at 1e-6 resolution
        let (fx, _) = marginals(&map, &cfg);
        for j in [0, 13, 64, 100, 127] {
            let q = j as f64 / 127.0;
            let fast = fx.inverse(q);
            let mut lo = -1.0;
            let mut hi = 1.0;
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                if fx.cdf(mid) < q {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((fast - 0.5 * (lo + hi)).abs() < 1e-6);
        }
    }

    #[test]
    fn two_blobs_produce_cross_density() {
        let cfg = AttentionSamplerConfig {
            out_size: (128, 128),
            ..Default::default()
        };
        let mut vals = vec![0.0; 128 * 128];
        for (rc, cc) in [(32usize, 32usize), (96, 96)] {
            for r in rc - 4..=rc + 4 {
                for c in cc - 4..=cc + 4 {
                    vals[r * 128 + c] = 1.0;
                }
            }
        }
        let map = SaliencyMap::new(128, 128, vals).unwrap();
        let g = attention_grid(&map, &cfg).unwrap();
        let window = |rc: usize, cc: usize| {
            let y_lo = -1.0 + 2.0 * (rc as f64 - 5.0) / 128.0;
            let y_hi = -1.0 + 2.0 * (rc as f64 + 5.0) / 128.0;
            let x_lo = -1.0 + 2.0 * (cc as f64 - 5.0) / 128.0;
            let x_hi = -1.0 + 2.0 * (cc as f64 + 5.0) / 128.0;
            g.coords()
                .iter()
                .filter(|c| c.x >= x_lo && c.x <= x_hi && c.y >= y_lo && c.y <= y_hi)
                .count()
        };
        let cross_a = window(32, 96);
        let cross_b = window(96, 32);
        let background = window(64, 16).max(1);
        assert!(
            cross_a > 2 * background && cross_b > 2 * background,
            "cross windows {cross_a}/{cross_b} vs background {background}"
        );
    }

    #[test]
    fn grids_are_bit_deterministic() {
        let cfg = AttentionSamplerConfig {
            out_size: (64, 64),
            ..Default::default()
        };
        let mut vals = vec![0.0; 128 * 128];
        for r in 50..60 {
            for c in 30..45 {
                vals[r * 128 + c] = 0.5;
            }
        }
        let map = SaliencyMap::new(128, 128, vals).unwrap();
        let a = attention_grid(&map, &cfg).unwrap();
        let b = attention_grid(&map, &cfg).unwrap();
        for (p, q) in a.coords().iter().zip(b.coords()) {
            assert_eq!(p.x.to_bits(), q.x.to_bits());
            assert_eq!(p.y.to_bits(), q.y.to_bits());
        }
    }

    proptest! {
        #[test]
        fn separable_and_strictly_monotone(seed in 0u64..1000) {
            let mut vals = vec![0.0; 32 * 32];
            let mut s = seed;
            for v in vals.iter_mut() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *v = ((s >> 33) % 3) as f64 * 0.5;
            }
            let map = SaliencyMap::new(32, 32, vals).unwrap();
            let cfg = AttentionSamplerConfig { out_size: (24, 40), ..Default::default() };
            let g = attention_grid(&map, &cfg).unwrap();
            for i in 0..24 {
                for j in 0..40 {
                    // x constant along columns, y constant along rows
                    prop_assert_eq!(g.at(i, j).x.to_bits(), g.at(0, j).x.to_bits());
                    prop_assert_eq!(g.at(i, j).y.to_bits(), g.at(i, 0).y.to_bits());
                    if j > 0 {
                        prop_assert!(g.at(i, j).x > g.at(i, j - 1).x);
                    }
                    if i > 0 {
                        prop_assert!(g.at(i, j).y > g.at(i - 1, j).y);
                    }
                }
            }
        }

        #[test]
        fn mass_preservation(seed in 0u64..200, a in -1.0..0.9f64, len in 0.05..1.0f64) {
            let b = (a + len).min(1.0);
            let mut vals = vec![0.0; 64 * 64];
            let mut s = seed.wrapping_add(7);
            for v in vals.iter_mut() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *v = ((s >> 33) % 3) as f64 * 0.5;
            }
            let map = SaliencyMap::new(64, 64, vals).unwrap();
            let cfg = AttentionSamplerConfig { out_size: (64, 64), ..Default::default() };
            let (fx, _) = marginals(&map, &cfg);
            let g = attention_grid(&map, &cfg).unwrap();
            let count = (0..64).filter(|&j| {
                let x = g.at(0, j).x;
                x >= a && x <= b
            }).count();
            let mass = fx.cdf(b) - fx.cdf(a);
            // discretization bound: each interval endpoint can cut off one
            // quantile, so the worst-case deviation is 2 samples
            prop_assert!(
                (count as f64 / 64.0 - mass).abs() <= 2.0 / 64.0 + 1e-12,
                "fraction {} vs mass {}", count as f64 / 64.0, mass
            );
        }
    }
}
