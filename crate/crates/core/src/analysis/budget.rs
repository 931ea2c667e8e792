use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::CorrectorSet;
use crate::error::{Error, Result};
use crate::field::{CorrectorLibrary, WhitneyBox, WhitneyLayout};
use crate::grid::{gradient, integrate_cells, Grid, MatrixField, ScalarField, VectorField};

use super::carleson::Tent;

/// Everything the budget reads; all fields live on one grid.
#[derive(Debug, Clone, Copy)]
pub struct BudgetInputs<'a> {
    pub a: &'a MatrixField,
    pub abar: &'a MatrixField,
    pub u: &'a ScalarField,
    pub ubar: &'a ScalarField,
    pub u2s: &'a ScalarField,
    pub layout: &'a WhitneyLayout,
    pub lib: &'a CorrectorLibrary,
}

/// Per-template weight `κ = max(max_i sup(|φ^i| + |σ^i|), max_y |A(y) - Ā|)²`
/// standing in for the constants of the budget estimate. Vanishes for
/// constant templates.
pub fn corrector_constant(set: &CorrectorSet) -> f64 {
    let osc = set
        .coefficient
        .values()
        .iter()
        .map(|m| m.sub(&set.abar).op_norm())
        .fold(0.0, f64::max);
    set.diagnostics.bounds.sup_total().max(osc).powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBudget {
    pub k: i32,
    pub j: Vec<i64>,
    pub template: String,
    pub eps: f64,
    pub eta: f64,
    pub kappa: f64,
    /// `κ (2^k ε)² ∫ χ² |∇²ū|²`.
    pub bulk: f64,
    /// `κ (1 + (ε/η)²) ∫_{W \ Ẇ} |∇ū|²`.
    pub layer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub tent: Tent,
    pub boxes: Vec<BoxBudget>,
    pub bulk: f64,
    pub layer: f64,
    /// `bulk + layer`.
    pub total: f64,
    /// `∫_{T_{2R}} |A∇u2s - Ā∇ū|²`.
    pub flux_l2: f64,
    /// `(R ∧ 1) ∫_{T_R} |∇z|²`.
    pub z_energy: f64,
    /// `R^{-2} ∫_{T_{2R}} z²`.
    pub z_mass: f64,
}

/// Symmetrized Hessian of `ū` in a cell of `b`, by differencing the cell
/// gradients: central where both neighbours lie in the box, one-sided at
/// box edges.
pub fn box_hessian(
    grid: &Grid,
    grad: &VectorField,
    b: &WhitneyBox,
    x_extent: f64,
    cell: usize,
) -> [[f64; 3]; 3] {
    let d = grid.dim();
    let idx = grid.cell_multi(cell);
    let neighbour = |axis: usize, step: i64| -> Option<usize> {
        let n = grid.cell_dims()[axis] as i64;
        let mut i = idx[axis] as i64 + step;
        if grid.periodic(axis) {
            i = i.rem_euclid(n);
        } else if i < 0 || i >= n {
            return None;
        }
        let mut m = idx;
        m[axis] = i as usize;
        let p = grid.cell_center(&m);
        b.contains(&p, x_extent).then(|| grid.cell_index(&m))
    };
    let mut h = [[0.0; 3]; 3];
    let here = grad.get(cell);
    for col in 0..d {
        let hb = grid.h()[col];
        let (fwd, bwd) = (neighbour(col, 1), neighbour(col, -1));
        for row in 0..d {
            h[row][col] = match (fwd, bwd) {
                (Some(f), Some(bk)) => (grad.get(f)[row] - grad.get(bk)[row]) / (2.0 * hb),
                (Some(f), None) => (grad.get(f)[row] - here[row]) / hb,
                (None, Some(bk)) => (here[row] - grad.get(bk)[row]) / hb,
                (None, None) => 0.0,
            };
        }
    }
    for r in 0..d {
        for c in r + 1..d {
            let s = 0.5 * (h[r][c] + h[c][r]);
            h[r][c] = s;
            h[c][r] = s;
        }
    }
    h
}

/// Bulk and layer terms of one box, weighted by `kappa`.
pub fn box_budget(
    grid: &Grid,
    grad_ubar: &VectorField,
    b: &WhitneyBox,
    x_extent: f64,
    kappa: f64,
) -> Result<BoxBudget> {
    let d = grid.dim();
    let bulk_integral = integrate_cells(grid, &b.region(), |c| {
        let p = grid.cell_center(&grid.cell_multi(c));
        let chi = b.chi(&p, x_extent);
        if chi == 0.0 {
            return 0.0;
        }
        let h = box_hessian(grid, grad_ubar, b, x_extent, c);
        let mut f2 = 0.0;
        for row in h.iter().take(d) {
            for v in row.iter().take(d) {
                f2 += v * v;
            }
        }
        chi * chi * f2
    })?;
    let energy = |c: usize| grad_ubar.get(c).iter().map(|g| g * g).sum::<f64>();
    let whole = integrate_cells(grid, &b.region(), energy)?;
    let inner = integrate_cells(grid, &b.shrunk(b.eta), energy)?;
    Ok(BoxBudget {
        k: b.k,
        j: b.j.clone(),
        template: b.template.clone(),
        eps: b.eps,
        eta: b.eta,
        kappa,
        bulk: kappa * b.period().powi(2) * bulk_integral,
        layer: kappa * (1.0 + (b.eps / b.eta).powi(2)) * (whole - inner).max(0.0),
    })
}

/// Budget terms over the boxes meeting `T_{2R}` plus the `z` diagnostics
/// for `z = u - u2s`.
pub fn error_budget(inp: &BudgetInputs<'_>, tent: &Tent) -> Result<ErrorBudget> {
    let z = inp.u.sub(inp.u2s)?;
    error_budget_with_z(inp, tent, &z)
}

pub fn error_budget_with_z(
    inp: &BudgetInputs<'_>,
    tent: &Tent,
    z: &ScalarField,
) -> Result<ErrorBudget> {
    let grid = inp.u.grid();
    for f in [inp.ubar, inp.u2s, z] {
        if f.grid() != grid {
            return Err(Error::ShapeMismatch(
                "budget fields live on different grids".into(),
            ));
        }
    }
    if inp.a.grid() != grid || inp.abar.grid() != grid {
        return Err(Error::ShapeMismatch(
            "coefficients live on a different grid".into(),
        ));
    }
    let d = grid.dim();
    let r = tent.r;
    let grad_ubar = gradient(inp.ubar)?;
    let ids = inp.layout.boxes_meeting(&tent.center, r, 2.0 * r);
    let boxes: Vec<BoxBudget> = ids
        .par_iter()
        .map(|&i| {
            let b = &inp.layout.boxes[i];
            let set = inp
                .lib
                .get(&b.template)
                .ok_or_else(|| Error::MissingTemplate(b.template.clone()))?;
            box_budget(
                grid,
                &grad_ubar,
                b,
                inp.layout.x_extent,
                corrector_constant(set),
            )
        })
        .collect::<Result<_>>()?;
    let bulk: f64 = boxes.iter().map(|b| b.bulk).sum();
    let layer: f64 = boxes.iter().map(|b| b.layer).sum();

    let big = tent.scaled(2.0).region(grid)?;
    let grad_u2s = gradient(inp.u2s)?;
    let flux_l2 = integrate_cells(grid, &big, |c| {
        let f1 = inp.a.get(c).mul_vec(grad_u2s.get(c));
        let f2 = inp.abar.get(c).mul_vec(grad_ubar.get(c));
        (0..d).map(|a| (f1[a] - f2[a]).powi(2)).sum()
    })?;
    let grad_z = gradient(z)?;
    let z_cells = z.to_cells();
    let z_energy = r.min(1.0)
        * integrate_cells(grid, &tent.region(grid)?, |c| {
            grad_z.get(c).iter().map(|g| g * g).sum()
        })?;
    let z_mass = integrate_cells(grid, &big, |c| z_cells.values()[c].powi(2))? / (r * r);
    Ok(ErrorBudget {
        tent: tent.clone(),
        boxes,
        bulk,
        layer,
        total: bulk + layer,
        flux_l2,
        z_energy,
        z_mass,
    })
}
