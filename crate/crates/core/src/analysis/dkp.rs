//! Oscillation `α(Z) = sup_{Y,Y' ∈ B_{t/2}(Z)} |A(Y) - A(Y')|` and its
//! Carleson integral `∫_T α² dZ / t`.
//!
//! Sampling rule: the ball is represented by the cell centers inside it when
//! its bounding box holds at most [`ENUMERATE_LIMIT`] cells and the ball at
//! most [`SAMPLE_SIZE`] centers. Otherwise the bounding cube of the ball is
//! split into an `8 × 8` (2-D) or `4 × 4 × 4` (3-D) grid of strata, one
//! uniformly jittered point is drawn per stratum from a ChaCha8 stream seeded
//! with the index of the cell containing `Z`, and points outside the ball are
//! discarded. The cell containing `Z` is always included.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_overlaps, MatrixField, Point, SymMat};

use super::carleson::Tent;

pub const SAMPLE_SIZE: usize = 64;
pub const ENUMERATE_LIMIT: usize = 256;

fn ball_cells(a: &MatrixField, z: &Point) -> Result<Vec<usize>> {
    let g = a.grid();
    let d = g.dim();
    let n = d - 1;
    let t = z[n] - g.origin(n);
    if !(t > 0.0) {
        return Err(Error::RegionOutsideGrid(format!(
            "point {z:?} is not above the boundary"
        )));
    }
    for ax in 0..d {
        if !g.periodic(ax) && (z[ax] < g.origin(ax) || z[ax] > g.origin(ax) + g.extent(ax)) {
            return Err(Error::RegionOutsideGrid(format!(
                "point {z:?} outside the grid"
            )));
        }
    }
    let radius = 0.5 * t;
    let home_idx = g.locate_cell(z);
    let home = g.cell_index(&home_idx);

    // index ranges of the bounding box
    let mut ranges: Vec<(i64, i64)> = Vec::with_capacity(d);
    let mut bbox_cells = 1usize;
    for ax in 0..d {
        let h = g.h()[ax];
        let lo = ((z[ax] - radius - g.origin(ax)) / h - 0.5).ceil() as i64;
        let hi = ((z[ax] + radius - g.origin(ax)) / h - 0.5).floor() as i64;
        bbox_cells = bbox_cells.saturating_mul((hi - lo + 1).max(0) as usize);
        ranges.push((lo, hi));
    }
    let mut cells = vec![home];
    let cell_of = |p: &Point| -> Option<usize> {
        for ax in 0..d {
            if !g.periodic(ax) && (p[ax] < g.origin(ax) || p[ax] >= g.origin(ax) + g.extent(ax)) {
                return None;
            }
        }
        Some(g.cell_index(&g.locate_cell(p)))
    };
    if bbox_cells <= ENUMERATE_LIMIT {
        let mut inside = Vec::new();
        let mut idx = [0i64; 3];
        let total = bbox_cells;
        for flat in 0..total {
            let mut rest = flat;
            for ax in 0..d {
                let w = (ranges[ax].1 - ranges[ax].0 + 1) as usize;
                idx[ax] = ranges[ax].0 + (rest % w) as i64;
                rest /= w;
            }
            let mut p = [0.0; 3];
            let mut dist2 = 0.0;
            for ax in 0..d {
                p[ax] = g.origin(ax) + (idx[ax] as f64 + 0.5) * g.h()[ax];
                dist2 += (p[ax] - z[ax]).powi(2);
            }
            if dist2 <= radius * radius {
                if let Some(c) = cell_of(&p) {
                    inside.push(c);
                }
            }
        }
        if inside.len() <= SAMPLE_SIZE {
            cells.extend(inside);
            return Ok(cells);
        }
    }
    let per_axis = if d == 2 {
        8
    } else if d == 3 {
        4
    } else {
        SAMPLE_SIZE
    };
    let strata = per_axis.pow(d as u32);
    let mut rng = ChaCha8Rng::seed_from_u64(home as u64);
    let width = 2.0 * radius / per_axis as f64;
    for s in 0..strata {
        let mut rest = s;
        let mut p = [0.0; 3];
        let mut dist2 = 0.0;
        for ax in 0..d {
            let k = rest % per_axis;
            rest /= per_axis;
            p[ax] = z[ax] - radius + (k as f64 + rng.gen::<f64>()) * width;
            dist2 += (p[ax] - z[ax]).powi(2);
        }
        if dist2 <= radius * radius {
            if let Some(c) = cell_of(&p) {
                cells.push(c);
            }
        }
    }
    Ok(cells)
}

/// Largest operator-norm difference among the sampled matrices of the ball.
pub fn dkp_alpha(a: &MatrixField, z: &Point) -> Result<f64> {
    let cells = ball_cells(a, z)?;
    let mut distinct: Vec<&SymMat> = Vec::new();
    for &c in &cells {
        let m = a.get(c);
        if !distinct.contains(&m) {
            distinct.push(m);
        }
    }
    let mut alpha = 0.0f64;
    for i in 0..distinct.len() {
        for j in i + 1..distinct.len() {
            alpha = alpha.max(distinct[i].sub(distinct[j]).op_norm());
        }
    }
    Ok(alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabValue {
    /// Generation `k`; the slab is `t ∈ [2^k, 2^{k+1})`.
    pub k: i32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DkpReport {
    pub tent: Tent,
    pub total: f64,
    /// Resolved generations `-1..=-K` met by the tent, in that order.
    pub per_generation: Vec<SlabValue>,
    /// `t < 2^{-K}`.
    pub sub_band: f64,
    /// `t ≥ 1`.
    pub above: f64,
}

/// `∫_{tent} α(Z)² / t dZ` by the midpoint rule, broken down per dyadic slab.
pub fn dkp_carleson_integral(a: &MatrixField, tent: &Tent, depth: usize) -> Result<DkpReport> {
    let g = a.grid();
    let d = g.dim();
    let n = d - 1;
    let region = tent.region(g)?;
    let mut ov = Vec::with_capacity(d);
    for ax in 0..d {
        ov.push(cell_overlaps(g, ax, region.lo[ax], region.hi[ax])?);
    }
    // flat list of (cell, weight) in a fixed order: t slowest
    let mut items: Vec<(usize, f64)> = Vec::new();
    let mut idx = [0usize; 3];
    let horiz: usize = ov[..n].iter().map(|o| o.len()).product();
    for &(it, wt) in &ov[n] {
        for flat in 0..horiz {
            let mut rest = flat;
            let mut w = wt;
            for ax in 0..n {
                let (i, wa) = ov[ax][rest % ov[ax].len()];
                rest /= ov[ax].len();
                idx[ax] = i;
                w *= wa;
            }
            idx[n] = it;
            items.push((g.cell_index(&idx), w));
        }
    }
    let contrib: Vec<(f64, f64)> = items
        .par_iter()
        .map(|&(c, w)| {
            let p = g.cell_center(&g.cell_multi(c));
            let alpha = dkp_alpha(a, &p)?;
            let t = p[n] - g.origin(n);
            Ok((t, w * alpha * alpha / t))
        })
        .collect::<Result<_>>()?;
    let band_top = (-(depth as f64)).exp2();
    let mut per_generation: Vec<SlabValue> = (1..=depth as i32)
        .map(|g| SlabValue { k: -g, value: 0.0 })
        .collect();
    let (mut sub_band, mut above) = (0.0, 0.0);
    for (t, v) in contrib {
        if t >= 1.0 {
            above += v;
        } else if t < band_top {
            sub_band += v;
        } else {
            let mut k = t.log2().floor() as i32;
            if (k as f64).exp2() > t {
                k -= 1;
            }
            per_generation[(-k - 1) as usize].value += v;
        }
    }
    let t_hi = region.hi[n] - g.origin(n);
    per_generation.retain(|s| (s.k as f64).exp2() < t_hi);
    let total = per_generation.iter().map(|s| s.value).sum::<f64>() + sub_band + above;
    Ok(DkpReport {
        tent: tent.clone(),
        total,
        per_generation,
        sub_band,
        above,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridSpec};
    use approx::assert_relative_eq;

    fn grid() -> crate::grid::Grid {
        make_grid(GridSpec::strip(1, 1.0, 2.0, 64, 128)).unwrap()
    }

    #[test]
    fn constant_field_has_no_oscillation() {
        let g = grid();
        let a = MatrixField::constant(&g, SymMat::scalar(2, 0.4));
        assert_eq!(dkp_alpha(&a, &[0.3, 0.4, 0.0]).unwrap(), 0.0);
        let r = dkp_carleson_integral(&a, &Tent::new(&[0.5], 0.5), 4).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn two_values_in_ball() {
        let g = grid();
        let a = MatrixField::from_cell_fn(&g, |p| {
            SymMat::scalar(2, if p[0] < 0.5 { 1.0 } else { 0.5 })
        });
        assert_relative_eq!(
            dkp_alpha(&a, &[0.5, 0.2, 0.0]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(dkp_alpha(&a, &[0.25, 0.2, 0.0]).unwrap(), 0.0);
        // large ball takes the sampled path and still sees both values
        assert_relative_eq!(
            dkp_alpha(&a, &[0.5, 0.9, 0.0]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn alpha_bounded_by_ellipticity_gap() {
        let g = grid();
        let a = MatrixField::from_cell_fn(&g, |p| {
            let v = 0.3 + 0.7 * ((17.0 * p[0] + 5.0 * p[1]).sin() * 0.5 + 0.5);
            SymMat::from_diag(&[v, 1.3 - v])
        });
        for i in 0..50 {
            let z = [
                (i as f64 * 0.37).fract(),
                0.05 + 1.5 * (i as f64 * 0.71).fract(),
                0.0,
            ];
            let al = dkp_alpha(&a, &z).unwrap();
            assert!((0.0..=0.7 + 1e-12).contains(&al));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = grid();
        let a = MatrixField::from_cell_fn(&g, |p| {
            SymMat::scalar(2, 0.5 + 0.5 * (40.0 * p[0]).sin().abs())
        });
        let z = [0.4, 1.2, 0.0];
        assert_eq!(dkp_alpha(&a, &z).unwrap(), dkp_alpha(&a, &z).unwrap());
        assert!(dkp_alpha(&a, &[0.4, 0.0, 0.0]).is_err());
    }

    #[test]
    fn slabs_add_up() {
        let g = grid();
        // oscillating only in the k = -1 slab
        let a = MatrixField::from_cell_fn(&g, |p| {
            let v = if (0.5..1.0).contains(&p[1]) && (p[0] * 16.0).floor() as i64 % 2 == 0 {
                0.5
            } else {
                1.0
            };
            SymMat::scalar(2, v)
        });
        let r = dkp_carleson_integral(&a, &Tent::new(&[0.5], 1.0), 3).unwrap();
        let sum: f64 = r.per_generation.iter().map(|s| s.value).sum::<f64>() + r.sub_band + r.above;
        assert_eq!(r.total, sum);
        assert!(r.per_generation[0].value > 0.0);
        assert_eq!(r.sub_band, 0.0);
    }
}
