//! Whitney boxes of the strip `[0, x_extent)^N × (0, ∞)`, locally periodic
//! coefficient fields built on them, the piecewise-constant homogenized field,
//! period schedules and cutoffs.
//!
//! The last coordinate is the height `t`. Box `W_kj` at generation `k < 0`
//! covers `x ∈ 2^k j + [-2^{k-1}, 2^{k-1})^N` (taken modulo `x_extent`) and
//! `t ∈ [2^k, 2^{k+1})`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::CorrectorSet;
use crate::error::{Error, Result};
use crate::grid::{AxisBox, Grid, MatrixField, Point, SymMat};

/// Cells required per finest coefficient period.
pub const MIN_CELLS_PER_PERIOD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Theorem,
    Laminate,
    Constant,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub mode: ScheduleMode,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub custom_exponent: Option<f64>,
}

fn default_p() -> f64 {
    3.0
}

fn default_c() -> f64 {
    1.0
}

impl EpsilonSchedule {
    pub fn new(mode: ScheduleMode, p: f64, c: f64) -> Self {
        Self {
            mode,
            p,
            c,
            custom_exponent: None,
        }
    }

    pub fn custom(exponent: f64, p: f64, c: f64) -> Self {
        Self {
            mode: ScheduleMode::Custom,
            p,
            c,
            custom_exponent: Some(exponent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "Meyers exponent p = {} must exceed 1",
                self.p
            )));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "prefactor c = {} must be positive",
                self.c
            )));
        }
        if self.mode == ScheduleMode::Custom {
            match self.custom_exponent {
                Some(e) if e > 0.0 && e.is_finite() => {}
                _ => {
                    return Err(Error::InvalidSchedule(
                        "custom mode needs a positive custom_exponent".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Exponent `a` in `ε = min(1, c 2^{a k})`.
    pub fn exponent(&self) -> Result<f64> {
        self.validate()?;
        Ok(match self.mode {
            ScheduleMode::Theorem => {
                let p = self.p;
                if p.is_infinite() {
                    1.5
                } else {
                    (3.0 * p - 1.0) / (2.0 * (p - 1.0))
                }
            }
            ScheduleMode::Laminate => 1.5,
            ScheduleMode::Constant => 1.0,
            ScheduleMode::Custom => self.custom_exponent.unwrap_or(1.0),
        })
    }

    /// Integrability exponent used for `η`; laminates behave like `p = ∞`.
    pub fn eta_p(&self) -> f64 {
        match self.mode {
            ScheduleMode::Laminate => f64::INFINITY,
            _ => self.p,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            c: self.c * factor,
            ..*self
        }
    }
}

/// Unrounded `min(1, c 2^{a k})`.
pub fn epsilon_raw(k: i32, schedule: &EpsilonSchedule) -> Result<f64> {
    if k >= 0 {
        return Err(Error::InvalidSchedule(format!(
            "generation {k} must be negative"
        )));
    }
    let a = schedule.exponent()?;
    Ok((schedule.c * (a * k as f64).exp2()).min(1.0))
}

/// `ε_k` rounded to `1/⌈1/ε⌉` so that every box holds a whole number of periods.
pub fn epsilon_for(k: i32, schedule: &EpsilonSchedule) -> Result<f64> {
    let raw = epsilon_raw(k, schedule)?;
    let periods = (1.0 / raw - 1e-9).ceil().max(1.0);
    Ok(1.0 / periods)
}

/// `η = min(1/2, ε^{2p/(3p-1)})`, exponent `2/3` for `p = ∞`.
pub fn eta_for(eps: f64, p: f64) -> f64 {
    let e = if p.is_infinite() {
        2.0 / 3.0
    } else {
        2.0 * p / (3.0 * p - 1.0)
    };
    eps.powf(e).min(0.5)
}

/// Quintic smoothstep `6s⁵ - 15s⁴ + 10s³` on `[0, 1]`, clamped outside.
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

fn smoothstep_deriv(s: f64) -> f64 {
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    30.0 * s * s * (s - 1.0) * (s - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitneyBox {
    pub k: i32,
    /// Horizontal index, `N` components.
    pub j: Vec<i64>,
    /// Box center; the last entry is the center height `1.5 · 2^k`.
    pub center: Point,
    pub side: f64,
    pub eps: f64,
    pub eta: f64,
    pub template: String,
}

impl WhitneyBox {
    pub fn dim(&self) -> usize {
        self.j.len() + 1
    }

    pub fn t_band(&self) -> (f64, f64) {
        (self.side, 2.0 * self.side)
    }

    /// Period of the coefficient inside the box, `2^k ε`.
    pub fn period(&self) -> f64 {
        self.side * self.eps
    }

    /// Box geometry in unwrapped coordinates (the `x` range of `j = 0`
    /// starts below zero).
    pub fn region(&self) -> AxisBox {
        self.shrunk(0.0)
    }

    /// Concentric box with side `(1 - shrink) 2^k`.
    pub fn shrunk(&self, shrink: f64) -> AxisBox {
        let d = self.dim();
        let half = 0.5 * (1.0 - shrink) * self.side;
        let lo: Vec<f64> = (0..d).map(|a| self.center[a] - half).collect();
        let hi: Vec<f64> = (0..d).map(|a| self.center[a] + half).collect();
        AxisBox::new(&lo, &hi)
    }

    /// Offset of `p` from the center, horizontal components reduced to the
    /// minimum image modulo `x_extent`.
    pub fn offset(&self, p: &Point, x_extent: f64) -> Point {
        let d = self.dim();
        let mut o = [0.0; 3];
        for a in 0..d - 1 {
            let mut v = (p[a] - self.center[a]).rem_euclid(x_extent);
            if v >= 0.5 * x_extent {
                v -= x_extent;
            }
            o[a] = v;
        }
        o[d - 1] = p[d - 1] - self.center[d - 1];
        o
    }

    /// `p` lies in the half-open box (periodic in `x`).
    pub fn contains(&self, p: &Point, x_extent: f64) -> bool {
        let o = self.offset(p, x_extent);
        let h = 0.5 * self.side;
        (0..self.dim()).all(|a| o[a] >= -h && o[a] < h)
    }

    fn chi_profile(&self, o: f64) -> (f64, f64) {
        let r1 = 0.5 * (1.0 - self.eta) * self.side;
        let r0 = 0.5 * (1.0 - 0.5 * self.eta) * self.side;
        let w = r0 - r1;
        let d = o.abs();
        if d <= r1 {
            (1.0, 0.0)
        } else if d >= r0 {
            (0.0, 0.0)
        } else {
            let s = (r0 - d) / w;
            (smoothstep(s), -smoothstep_deriv(s) / w * o.signum())
        }
    }

    /// Cutoff `χ` at `p`: one on the `(1-η)`-shrunken box, zero outside the
    /// `(1-η/2)`-shrunken box.
    pub fn chi(&self, p: &Point, x_extent: f64) -> f64 {
        let o = self.offset(p, x_extent);
        let mut v = 1.0;
        for oa in o.iter().take(self.dim()) {
            v *= self.chi_profile(*oa).0;
            if v == 0.0 {
                break;
            }
        }
        v
    }

    pub fn chi_gradient(&self, p: &Point, x_extent: f64) -> [f64; 3] {
        let d = self.dim();
        let o = self.offset(p, x_extent);
        let prof: Vec<(f64, f64)> = (0..d).map(|a| self.chi_profile(o[a])).collect();
        let mut g = [0.0; 3];
        for a in 0..d {
            g[a] = (0..d)
                .map(|b| if a == b { prof[b].1 } else { prof[b].0 })
                .product();
        }
        g
    }

    /// Componentwise bound on `|∇χ|`: `max s' / (η 2^k / 4) = 7.5 / (η 2^k)`.
    pub fn chi_gradient_bound(&self) -> f64 {
        7.5 / (self.eta * self.side)
    }
}

/// Rule mapping `(k, j)` to a template label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Assignment {
    Single {
        template: String,
    },
    /// `even` when `k + Σ j` is even, `odd` otherwise.
    Alternating {
        even: String,
        odd: String,
    },
}

impl Assignment {
    pub fn label(&self, k: i32, j: &[i64]) -> &str {
        match self {
            Assignment::Single { template } => template,
            Assignment::Alternating { even, odd } => {
                let s: i64 = k as i64 + j.iter().sum::<i64>();
                if s.rem_euclid(2) == 0 {
                    even
                } else {
                    odd
                }
            }
        }
    }

    pub fn labels(&self) -> Vec<&str> {
        match self {
            Assignment::Single { template } => vec![template],
            Assignment::Alternating { even, odd } => vec![even, odd],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AInfinity {
    /// Row-major `dim x dim` matrix.
    Matrix { matrix: Vec<f64> },
    /// Homogenized matrix of the named template.
    Homogenized { template: String },
}

/// Solved cell problems by template label.
pub type CorrectorLibrary = BTreeMap<String, CorrectorSet>;

fn lookup<'a>(lib: &'a CorrectorLibrary, label: &str) -> Result<&'a CorrectorSet> {
    lib.get(label)
        .ok_or_else(|| Error::MissingTemplate(label.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    /// Horizontal dimension `N`.
    pub n: usize,
    pub x_extent: f64,
    /// Deepest resolved generation is `-depth`.
    pub depth: usize,
    pub schedule: EpsilonSchedule,
    pub assignment: Assignment,
    pub a_inf: AInfinity,
    /// Ellipticity bounds `lower Id ≤ A ≤ upper Id`.
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
}

fn default_upper() -> f64 {
    1.0
}

impl CoefficientSpec {
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn layout(&self) -> Result<WhitneyLayout> {
        let mut layout = whitney_decompose(self.n, self.x_extent, self.depth)?;
        layout.apply_schedule(&self.schedule, &self.assignment)?;
        Ok(layout)
    }

    pub fn a_inf_matrix(&self, lib: &CorrectorLibrary) -> Result<SymMat> {
        let d = self.dim();
        let m = match &self.a_inf {
            AInfinity::Matrix { matrix } => {
                if matrix.len() != d * d {
                    return Err(Error::ShapeMismatch(format!(
                        "A_inf needs {} entries",
                        d * d
                    )));
                }
                let (m, asym) = SymMat::from_full(d, matrix);
                if asym > 0.0 {
                    return Err(Error::NotSymmetric {
                        cell: 0,
                        asymmetry: asym,
                    });
                }
                m
            }
            AInfinity::Homogenized { template } => lookup(lib, template)?.abar,
        };
        Ok(m)
    }

    fn check_templates(&self, lib: &CorrectorLibrary) -> Result<()> {
        for l in self.assignment.labels() {
            let set = lookup(lib, l)?;
            if set.template.dim != self.dim() {
                return Err(Error::InvalidTemplate {
                    label: l.to_string(),
                    reason: format!(
                        "dimension {} differs from the strip dimension {}",
                        set.template.dim,
                        self.dim()
                    ),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitneyLayout {
    pub n: usize,
    pub x_extent: f64,
    pub depth: usize,
    /// Generation `-1` first, then `-2`, ...; within a generation `j` runs
    /// with axis 0 fastest.
    pub boxes: Vec<WhitneyBox>,
    offsets: Vec<usize>,
}

/// All Whitney boxes of generations `-1..=-depth` over `[0, x_extent)^N`.
pub fn whitney_decompose(n: usize, x_extent: f64, depth: usize) -> Result<WhitneyLayout> {
    if depth == 0 {
        return Err(Error::InvalidGrid(
            "Whitney depth must be at least 1".into(),
        ));
    }
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidGrid(format!(
            "horizontal dimension {n} not in 1..=2"
        )));
    }
    let per_half = 2.0 * x_extent;
    if !(x_extent > 0.0) || (per_half - per_half.round()).abs() > 1e-9 {
        return Err(Error::InvalidGrid(format!(
            "x extent {x_extent} must be a positive multiple of 1/2"
        )));
    }
    let mut boxes = Vec::new();
    let mut offsets = Vec::with_capacity(depth + 1);
    for g in 1..=depth {
        offsets.push(boxes.len());
        let k = -(g as i32);
        let side = (k as f64).exp2();
        let count = (x_extent / side).round() as i64;
        let total = count.pow(n as u32);
        for flat in 0..total {
            let mut j = Vec::with_capacity(n);
            let mut rest = flat;
            for _ in 0..n {
                j.push(rest % count);
                rest /= count;
            }
            let mut center = [0.0; 3];
            for a in 0..n {
                center[a] = side * j[a] as f64;
            }
            center[n] = 1.5 * side;
            boxes.push(WhitneyBox {
                k,
                j,
                center,
                side,
                eps: 1.0,
                eta: 0.5,
                template: String::new(),
            });
        }
    }
    offsets.push(boxes.len());
    Ok(WhitneyLayout {
        n,
        x_extent,
        depth,
        boxes,
        offsets,
    })
}

impl WhitneyLayout {
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn generation(&self, k: i32) -> &[WhitneyBox] {
        let g = (-k) as usize;
        if k >= 0 || g > self.depth {
            return &[];
        }
        &self.boxes[self.offsets[g - 1]..self.offsets[g]]
    }

    /// Fills `ε`, `η` and template labels.
    pub fn apply_schedule(
        &mut self,
        schedule: &EpsilonSchedule,
        assignment: &Assignment,
    ) -> Result<()> {
        schedule.validate()?;
        for b in &mut self.boxes {
            b.eps = epsilon_for(b.k, schedule)?;
            b.eta = eta_for(b.eps, schedule.eta_p());
            b.template = assignment.label(b.k, &b.j).to_string();
        }
        Ok(())
    }

    /// Generation and horizontal index of the (possibly unresolved) Whitney
    /// box containing `p`; `None` for `t ≥ 1` or `t ≤ 0`.
    pub fn generalized_index(&self, p: &Point) -> Option<(i32, Vec<i64>)> {
        let t = p[self.n];
        if !(t > 0.0) || t >= 1.0 {
            return None;
        }
        let mut k = t.log2().floor() as i32;
        // guard against rounding at dyadic heights
        if (k as f64).exp2() > t {
            k -= 1;
        } else if ((k + 1) as f64).exp2() <= t {
            k += 1;
        }
        let side = (k as f64).exp2();
        let count = (self.x_extent / side).round() as i64;
        let j = (0..self.n)
            .map(|a| ((p[a] / side + 0.5).floor() as i64).rem_euclid(count.max(1)))
            .collect();
        Some((k, j))
    }

    /// Index into `boxes` of the resolved box containing `p`.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        let (k, j) = self.generalized_index(p)?;
        let g = (-k) as usize;
        if g > self.depth {
            return None;
        }
        let count = (self.x_extent / (k as f64).exp2()).round() as i64;
        let mut flat = 0i64;
        let mut stride = 1i64;
        for &ja in &j {
            flat += ja * stride;
            stride *= count;
        }
        Some(self.offsets[g - 1] + flat as usize)
    }

    /// Resolution check: every resolved period must hold at least
    /// [`MIN_CELLS_PER_PERIOD`] cells along every axis.
    pub fn check_resolution(&self, grid: &Grid) -> Result<()> {
        let mut worst: Option<(f64, i32, usize, f64)> = None;
        for g in 1..=self.depth {
            let k = -(g as i32);
            let Some(b) = self.generation(k).first() else {
                continue;
            };
            let period = b.period();
            for a in 0..self.dim() {
                let cpp = period / grid.h()[a];
                if worst.is_none_or(|w| cpp < w.0) {
                    worst = Some((cpp, k, a, period));
                }
            }
        }
        if let Some((cpp, k, a, period)) = worst {
            if cpp < MIN_CELLS_PER_PERIOD as f64 - 1e-9 {
                return Err(Error::UnderResolved {
                    generation: k,
                    axis: a,
                    period,
                    cells_per_period: cpp,
                    min_cells: MIN_CELLS_PER_PERIOD,
                    required_cells: (MIN_CELLS_PER_PERIOD as f64 / period).ceil() as usize,
                });
            }
        }
        Ok(())
    }

    /// Boxes meeting the open region `(x ± half_width)^N × (0, height)`.
    pub fn boxes_meeting(&self, center: &[f64], half_width: f64, height: f64) -> Vec<usize> {
        let n = self.n;
        self.boxes
            .iter()
            .enumerate()
            .filter(|(_, b)| {
                let (t0, _) = b.t_band();
                if t0 >= height {
                    return false;
                }
                (0..n).all(|a| {
                    let mut d = (b.center[a] - center[a]).rem_euclid(self.x_extent);
                    if d > 0.5 * self.x_extent {
                        d = self.x_extent - d;
                    }
                    d < half_width + 0.5 * b.side || half_width * 2.0 >= self.x_extent
                })
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Locally periodic coefficient field: `A_∞` for `t ≥ 1`, the rescaled
/// template `A_kj(x / (2^k ε_kj))` in resolved boxes, and the homogenized
/// matrix of the box's template below `2^{-depth}`.
pub fn assemble_a(
    spec: &CoefficientSpec,
    grid: &Grid,
    lib: &CorrectorLibrary,
) -> Result<MatrixField> {
    let layout = spec.layout()?;
    layout.check_resolution(grid)?;
    assemble_with(spec, &layout, grid, lib, true)
}

/// Piecewise-constant homogenized field: `Ā_kj` on each box, `A_∞` above.
pub fn assemble_abar(
    spec: &CoefficientSpec,
    grid: &Grid,
    lib: &CorrectorLibrary,
) -> Result<MatrixField> {
    let layout = spec.layout()?;
    assemble_with(spec, &layout, grid, lib, false)
}

fn assemble_with(
    spec: &CoefficientSpec,
    layout: &WhitneyLayout,
    grid: &Grid,
    lib: &CorrectorLibrary,
    oscillating: bool,
) -> Result<MatrixField> {
    if grid.dim() != spec.dim() {
        return Err(Error::ShapeMismatch(format!(
            "grid dimension {} vs coefficient dimension {}",
            grid.dim(),
            spec.dim()
        )));
    }
    spec.check_templates(lib)?;
    let a_inf = spec.a_inf_matrix(lib)?;
    let n = spec.n;
    let values: Vec<Result<SymMat>> = (0..grid.n_cells())
        .into_par_iter()
        .map(|c| {
            let p = grid.cell_center(&grid.cell_multi(c));
            let Some((k, j)) = layout.generalized_index(&p) else {
                return Ok(a_inf);
            };
            let resolved = (-k) as usize <= layout.depth;
            let set = lookup(lib, spec.assignment.label(k, &j))?;
            if !(oscillating && resolved) {
                return Ok(set.abar);
            }
            let b = &layout.boxes[layout.locate(&p).expect("resolved point has a box")];
            let scale = b.period();
            let mut y = [0.0; 3];
            for a in 0..=n {
                y[a] = p[a] / scale;
            }
            Ok(set.template.eval(&y))
        })
        .collect();
    let values: Vec<SymMat> = values.into_iter().collect::<Result<_>>()?;
    let field = MatrixField::new(grid.clone(), values)?;
    field.check_ellipticity(spec.lower, spec.upper, 1e-12)?;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{solve_cell, PeriodicTemplate};
    use crate::grid::{make_grid, GridSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn lib_with(t: PeriodicTemplate) -> CorrectorLibrary {
        let mut lib = CorrectorLibrary::new();
        lib.insert(t.label.clone(), solve_cell(&t, 16).unwrap());
        lib
    }

    fn spec(
        label: &str,
        mode: ScheduleMode,
        depth: usize,
        lower: f64,
        upper: f64,
    ) -> CoefficientSpec {
        CoefficientSpec {
            n: 1,
            x_extent: 1.0,
            depth,
            schedule: EpsilonSchedule::new(mode, 3.0, 1.0),
            assignment: Assignment::Single {
                template: label.into(),
            },
            a_inf: AInfinity::Homogenized {
                template: label.into(),
            },
            lower,
            upper,
        }
    }

    #[test]
    fn box_counts() {
        assert_eq!(whitney_decompose(1, 1.0, 1).unwrap().boxes.len(), 2);
        let l = whitney_decompose(1, 1.0, 3).unwrap();
        assert_eq!(l.boxes.len(), 14);
        let b = &l.generation(-2)[1];
        assert_eq!(b.t_band(), (0.25, 0.5));
        assert_eq!(b.side, 0.25);
        assert_eq!(whitney_decompose(2, 1.0, 2).unwrap().boxes.len(), 4 + 16);
        assert!(whitney_decompose(1, 1.0, 0).is_err());
    }

    #[test]
    fn generations_partition_the_slab() {
        let l = whitney_decompose(1, 2.0, 4).unwrap();
        for g in 1..=4 {
            let k = -g;
            let vol: f64 = l.generation(k).iter().map(|b| b.region().volume()).sum();
            // slab [0,2) x [2^k, 2^{k+1}), dyadic arithmetic is exact
            assert_eq!(vol, 2.0 * (k as f64).exp2());
        }
    }

    #[test]
    fn locate_matches_contains() {
        let l = whitney_decompose(1, 1.0, 3).unwrap();
        for i in 0..200 {
            let p = [
                (i as f64 * 0.377).fract(),
                0.13 + 0.85 * (i as f64 * 0.613).fract(),
                0.0,
            ];
            let hits: Vec<usize> = (0..l.boxes.len())
                .filter(|&b| l.boxes[b].contains(&p, 1.0))
                .collect();
            match l.locate(&p) {
                Some(b) => assert_eq!(hits, vec![b]),
                None => assert!(hits.is_empty()),
            }
        }
        // j = 0 wraps around x = 0
        let b0 = l.locate(&[0.95, 0.7, 0.0]).unwrap();
        assert_eq!(l.boxes[b0].j, vec![0]);
    }

    #[test]
    fn schedule_examples() {
        let th = EpsilonSchedule::new(ScheduleMode::Theorem, 3.0, 1.0);
        assert_eq!(epsilon_for(-2, &th).unwrap(), 0.0625);
        let lam = EpsilonSchedule::new(ScheduleMode::Laminate, 3.0, 1.0);
        assert_eq!(epsilon_raw(-2, &lam).unwrap(), 0.125);
        assert_eq!(epsilon_for(-2, &lam).unwrap(), 0.125);
        let con = EpsilonSchedule::new(ScheduleMode::Constant, 3.0, 1.0);
        assert_eq!(epsilon_for(-2, &con).unwrap(), 0.25);
        assert!(epsilon_for(-1, &EpsilonSchedule::new(ScheduleMode::Theorem, 1.0, 1.0)).is_err());
        // 2^{-1.5} rounds to one third
        assert_relative_eq!(epsilon_for(-1, &lam).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn eta_examples() {
        assert_relative_eq!(eta_for(0.0625, 3.0), 0.125, epsilon = 1e-15);
        assert_eq!(eta_for(1.0, 3.0), 0.5);
        assert_relative_eq!(eta_for(0.125, f64::INFINITY), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn identity_template_gives_identity() {
        let g = make_grid(GridSpec::strip(1, 1.0, 2.0, 128, 256)).unwrap();
        let lib = lib_with(PeriodicTemplate::identity("id", 2));
        let s = spec("id", ScheduleMode::Constant, 2, 1.0, 1.0);
        let a = assemble_a(&s, &g, &lib).unwrap();
        assert!(a.values().iter().all(|m| *m == SymMat::identity(2)));
        let abar = assemble_abar(&s, &g, &lib).unwrap();
        for m in abar.values() {
            assert!(m.sub(&SymMat::identity(2)).op_norm() < 1e-12);
        }
    }

    #[test]
    fn laminate_point_evaluation() {
        let t = PeriodicTemplate::laminate("lam", 2, 0, vec![0.25, 1.0]).unwrap();
        let lib = lib_with(t.clone());
        let s = spec("lam", ScheduleMode::Constant, 2, 0.25, 1.0);
        let g = make_grid(GridSpec::strip(1, 1.0, 2.0, 128, 256)).unwrap();
        let a = assemble_a(&s, &g, &lib).unwrap();
        let eps = epsilon_for(-1, &s.schedule).unwrap();
        let abar = lib["lam"].abar;
        for c in 0..g.n_cells() {
            let p = g.cell_center(&g.cell_multi(c));
            let got = a.get(c);
            if p[1] >= 1.0 {
                assert_eq!(*got, abar);
            } else if (0.5..1.0).contains(&p[1]) {
                let y = (p[0] / (0.5 * eps)).rem_euclid(1.0);
                let v = if y < 0.5 { 0.25 } else { 1.0 };
                assert_eq!(*got, SymMat::scalar(2, v), "cell at {p:?}");
            } else if p[1] < 0.25 {
                assert_eq!(*got, abar);
            }
        }
    }

    #[test]
    fn under_resolution_is_reported() {
        let t = PeriodicTemplate::laminate("lam", 2, 0, vec![0.25, 1.0]).unwrap();
        let lib = lib_with(t);
        let s = spec("lam", ScheduleMode::Theorem, 3, 0.25, 1.0);
        let g = make_grid(GridSpec::strip(1, 1.0, 2.0, 64, 128)).unwrap();
        match assemble_a(&s, &g, &lib) {
            Err(Error::UnderResolved {
                generation,
                required_cells,
                ..
            }) => {
                assert_eq!(generation, -3);
                // period 2^-3 · 2^-6 needs 8 · 512 cells per unit length
                assert_eq!(required_cells, 4096);
            }
            other => panic!("expected under-resolution, got {other:?}"),
        }
    }

    #[test]
    fn ellipticity_is_enforced() {
        let t = PeriodicTemplate::laminate("lam", 2, 0, vec![1.0, 3.0]).unwrap();
        let lib = lib_with(t);
        let g = make_grid(GridSpec::strip(1, 1.0, 2.0, 64, 128)).unwrap();
        let strict = spec("lam", ScheduleMode::Constant, 1, 0.5, 1.0);
        assert!(matches!(
            assemble_a(&strict, &g, &lib),
            Err(Error::Ellipticity { .. })
        ));
        let loose = spec("lam", ScheduleMode::Constant, 1, 1.0, 3.0);
        let a = assemble_a(&loose, &g, &lib).unwrap();
        assert!(a.values().iter().all(|m| m.min_eigenvalue() >= 1.0 - 1e-12));
    }

    #[test]
    fn alternating_assignment_and_determinism() {
        let mut lib = lib_with(PeriodicTemplate::laminate("a", 2, 0, vec![0.3, 1.0]).unwrap());
        lib.extend(lib_with(
            PeriodicTemplate::random_checkerboard("b", 2, 2, 0.3, 1.0, 4).unwrap(),
        ));
        let s = CoefficientSpec {
            assignment: Assignment::Alternating {
                even: "a".into(),
                odd: "b".into(),
            },
            ..spec("a", ScheduleMode::Constant, 2, 0.3, 1.0)
        };
        let g = make_grid(GridSpec::strip(1, 1.0, 2.0, 128, 256)).unwrap();
        let a1 = assemble_a(&s, &g, &lib).unwrap();
        let a2 = assemble_a(&s, &g, &lib).unwrap();
        assert_eq!(a1, a2);
        let layout = s.layout().unwrap();
        assert_eq!(layout.generation(-1)[0].template, "b");
        assert_eq!(layout.generation(-1)[1].template, "a");
        assert_eq!(layout.generation(-2)[0].template, "a");
    }

    #[test]
    fn cutoff_values() {
        let mut l = whitney_decompose(1, 1.0, 2).unwrap();
        l.apply_schedule(
            &EpsilonSchedule::new(ScheduleMode::Theorem, 3.0, 1.0),
            &Assignment::Single {
                template: "x".into(),
            },
        )
        .unwrap();
        let b = &l.generation(-2)[1];
        assert_eq!(b.chi(&b.center, 1.0), 1.0);
        let edge = [b.center[0] + 0.5 * b.side, b.center[1], 0.0];
        assert_eq!(b.chi(&edge, 1.0), 0.0);
        let r1 = 0.5 * (1.0 - b.eta) * b.side;
        let r0 = 0.5 * (1.0 - 0.5 * b.eta) * b.side;
        let mut prev = 1.0;
        for i in 1..10 {
            let d = r1 + (r0 - r1) * i as f64 / 10.0;
            let v = b.chi(&[b.center[0], b.center[1] + d, 0.0], 1.0);
            assert!(v > 0.0 && v < 1.0 && v < prev);
            prev = v;
        }
        let mid = b.chi(&[b.center[0], b.center[1] + 0.5 * (r0 + r1), 0.0], 1.0);
        assert_relative_eq!(mid, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn cutoff_gradient_matches_differences() {
        let mut l = whitney_decompose(1, 1.0, 1).unwrap();
        l.apply_schedule(
            &EpsilonSchedule::new(ScheduleMode::Constant, 3.0, 0.5),
            &Assignment::Single {
                template: "x".into(),
            },
        )
        .unwrap();
        let b = &l.boxes[0];
        let bound = b.chi_gradient_bound();
        let h = 1e-6;
        for i in 0..400 {
            let p = [
                -0.25 + 0.5 * (i as f64 * 0.618).fract(),
                0.5 + 0.5 * (i as f64 * 0.414).fract(),
                0.0,
            ];
            let g = b.chi_gradient(&p, 1.0);
            for a in 0..2 {
                let mut pp = p;
                let mut pm = p;
                pp[a] += h;
                pm[a] -= h;
                let fd = (b.chi(&pp, 1.0) - b.chi(&pm, 1.0)) / (2.0 * h);
                assert!((fd - g[a]).abs() < 1e-4 * (1.0 + bound), "{fd} vs {}", g[a]);
                assert!(g[a].abs() <= bound * (1.0 + 1e-12));
            }
        }
    }

    proptest! {
        #[test]
        fn eps_eta_monotone_and_ordered(mode in 0usize..3, p in 1.1f64..20.0, c in 0.05f64..1.0) {
            let mode = [ScheduleMode::Theorem, ScheduleMode::Laminate, ScheduleMode::Constant][mode];
            let s = EpsilonSchedule::new(mode, p, c);
            let mut prev = (f64::INFINITY, f64::INFINITY);
            for g in 1..8 {
                let e = epsilon_for(-g, &s).unwrap();
                let h = eta_for(e, s.eta_p());
                prop_assert!(e > 0.0 && e <= 1.0);
                prop_assert!(h >= e);
                prop_assert!(e <= prev.0 && h <= prev.1);
                prev = (e, h);
            }
        }
    }
}
