use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient, integrate_cells, AxisBox, Grid, ScalarField};

/// Tent `T_R(x) = (x + (-R/2, R/2)^N) × (0, R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tent {
    pub center: Vec<f64>,
    pub r: f64,
}

impl Tent {
    pub fn new(center: &[f64], r: f64) -> Self {
        Self {
            center: center.to_vec(),
            r,
        }
    }

    /// Tent with the same center and side `factor · R`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            center: self.center.clone(),
            r: self.r * factor,
        }
    }

    /// Region of the tent clipped to the grid: heights above the top face and
    /// horizontal widths beyond one period are cut (with a warning).
    pub fn region(&self, grid: &Grid) -> Result<AxisBox> {
        let d = grid.dim();
        let n = d - 1;
        if self.center.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "tent center has {} components, expected {n}",
                self.center.len()
            )));
        }
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for a in 0..n {
            let mut half = 0.5 * self.r;
            if grid.periodic(a) && 2.0 * half > grid.extent(a) {
                log::warn!("tent of side {} wider than the period; clipped", self.r);
                half = 0.5 * grid.extent(a);
            }
            lo[a] = self.center[a] - half;
            hi[a] = self.center[a] + half;
            if !grid.periodic(a) {
                let (o, e) = (grid.origin(a), grid.origin(a) + grid.extent(a));
                if lo[a] < o || hi[a] > e {
                    log::warn!("tent leaves the grid along axis {a}; clipped");
                    lo[a] = lo[a].max(o);
                    hi[a] = hi[a].min(e);
                }
            }
        }
        lo[n] = grid.origin(n);
        hi[n] = grid.origin(n) + self.r;
        let top = grid.origin(n) + grid.extent(n);
        if hi[n] > top {
            log::warn!("tent of height {} exceeds the strip; clipped", self.r);
            hi[n] = top;
        }
        Ok(AxisBox::new(&lo, &hi))
    }
}

/// Per-cell Carleson density `t |∇u|²` with `t` at cell centers.
#[derive(Debug, Clone)]
pub struct CarlesonDensity {
    grid: Grid,
    density: Vec<f64>,
    /// Height below which coefficients are unresolved (`2^{-K}`), if any.
    band_top: Option<f64>,
}

impl CarlesonDensity {
    pub fn new(u: &ScalarField, band_top: Option<f64>) -> Result<Self> {
        let grid = u.grid().clone();
        let n = grid.dim() - 1;
        let grad = gradient(u)?;
        let density = (0..grid.n_cells())
            .map(|c| {
                let t = grid.cell_center(&grid.cell_multi(c))[n] - grid.origin(n);
                t * grad.get(c).iter().map(|g| g * g).sum::<f64>()
            })
            .collect();
        Ok(Self {
            grid,
            density,
            band_top,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn evaluate(&self, tent: &Tent) -> Result<TentValue> {
        let region = tent.region(&self.grid)?;
        let raw = integrate_cells(&self.grid, &region, |c| self.density[c])?;
        let n = self.grid.dim() - 1;
        let sub_band = match self.band_top {
            Some(b) => {
                let mut band = region;
                band.hi[n] = band.hi[n].min(self.grid.origin(n) + b);
                integrate_cells(&self.grid, &band, |c| self.density[c])?
            }
            None => 0.0,
        };
        Ok(TentValue {
            center: tent.center.clone(),
            r: tent.r,
            raw,
            normalized: raw / tent.r.powi(n as i32),
            sub_band,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TentValue {
    pub center: Vec<f64>,
    pub r: f64,
    /// `∫_{T_R} t|∇u|²`.
    pub raw: f64,
    /// `R^{-N} ∫_{T_R} t|∇u|²`.
    pub normalized: f64,
    /// Part of `raw` below the resolved generations.
    pub sub_band: f64,
}

/// `(raw, normalized)` for a single tent.
pub fn carleson_functional(u: &ScalarField, tent: &Tent) -> Result<(f64, f64)> {
    let v = CarlesonDensity::new(u, None)?.evaluate(tent)?;
    Ok((v.raw, v.normalized))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSummary {
    pub r: f64,
    pub max_normalized: f64,
    pub argmax_center: Vec<f64>,
    pub max_sub_band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    pub rows: Vec<TentValue>,
    pub per_radius: Vec<RadiusSummary>,
    pub sup: f64,
    /// `max/min` over radii of the per-radius maxima.
    pub ratio: f64,
}

/// Grid-aligned centers with spacing `R/2` covering one period per axis.
pub fn aligned_centers(grid: &Grid, r: f64) -> Vec<Vec<f64>> {
    let n = grid.dim() - 1;
    let mut per_axis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for a in 0..n {
        let step = 0.5 * r;
        let count = ((grid.extent(a) / step).round() as usize).max(1);
        per_axis.push(
            (0..count)
                .map(|i| grid.origin(a) + i as f64 * step)
                .collect(),
        );
    }
    let mut out = vec![Vec::new()];
    for axis in per_axis {
        out = out
            .into_iter()
            .flat_map(|c| {
                axis.iter().map(move |&x| {
                    let mut c = c.clone();
                    c.push(x);
                    c
                })
            })
            .collect();
    }
    out
}

/// Sup of the normalized functional over radii and centers. With `centers =
/// None` every radius uses [`aligned_centers`].
pub fn carleson_sup(
    density: &CarlesonDensity,
    centers: Option<&[Vec<f64>]>,
    radii: &[f64],
) -> Result<CarlesonReport> {
    let mut tents = Vec::new();
    for &r in radii {
        let cs = match centers {
            Some(c) => c.to_vec(),
            None => aligned_centers(density.grid(), r),
        };
        tents.extend(cs.into_iter().map(|c| Tent { center: c, r }));
    }
    let rows: Vec<TentValue> = tents
        .par_iter()
        .map(|t| density.evaluate(t))
        .collect::<Result<_>>()?;
    let mut per_radius = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut best: Option<&TentValue> = None;
        let mut band = 0.0f64;
        for row in rows.iter().filter(|row| row.r == r) {
            if best.is_none_or(|b| row.normalized > b.normalized) {
                best = Some(row);
            }
            band = band.max(row.sub_band / r.powi(row.center.len() as i32));
        }
        if let Some(b) = best {
            per_radius.push(RadiusSummary {
                r,
                max_normalized: b.normalized,
                argmax_center: b.center.clone(),
                max_sub_band: band,
            });
        }
    }
    let sup = per_radius
        .iter()
        .map(|p| p.max_normalized)
        .fold(0.0, f64::max);
    let min = per_radius
        .iter()
        .map(|p| p.max_normalized)
        .fold(f64::INFINITY, f64::min);
    let ratio = if sup == 0.0 { 1.0 } else { sup / min };
    Ok(CarlesonReport {
        rows,
        per_radius,
        sup,
        ratio,
    })
}

/// Dyadic radii `2^{lo}, ..., 2^{hi}`.
pub fn dyadic_radii(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| (e as f64).exp2()).collect()
}
