use std::f64::consts::PI;

use homcarl_core::fit::loglog_slope;
use homcarl_core::oracle1d::{l2_error_curve, ErrorRow};
use homcarl_core::{
    dirichlet_solve, make_grid, BoundaryData, GridSpec, MatrixField, Point, ScalarField, SymMat,
};
use serde::{Deserialize, Serialize};

use super::{write_json, RunContext};
use crate::error::{CliError, CliResult};
use crate::report::{self, RateRow};

/// `cos(2πx) e^{-2πt}`.
pub fn manufactured(p: &Point) -> f64 {
    (2.0 * PI * p[0]).cos() * (-2.0 * PI * p[1]).exp()
}

/// `‖u_h - u‖_{L²}` with 2×2 Gauss points per cell.
pub fn strip_l2_error(u: &ScalarField, exact: impl Fn(&Point) -> f64) -> f64 {
    let g = u.grid();
    let d = g.dim();
    let off = 0.5 / 3f64.sqrt();
    let mut s = 0.0;
    for c in 0..g.n_cells() {
        let center = g.cell_center(&g.cell_multi(c));
        for q in 0..(1usize << d) {
            let mut p = center;
            for a in 0..d {
                let sign = if (q >> a) & 1 == 1 { 1.0 } else { -1.0 };
                p[a] += sign * off * g.h()[a];
            }
            s += (u.interpolate(&p) - exact(&p)).powi(2);
        }
    }
    (s * g.cell_volume() / (1usize << d) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub oracle_slopes: Vec<f64>,
    pub oracle_curves: Vec<Vec<ErrorRow>>,
    pub strip_rate: f64,
    pub strip_rows: Vec<RateRow>,
}

/// 1-D oracle error curves and the manufactured-solution rate table.
pub fn run_convergence(ctx: &RunContext) -> CliResult<ConvergenceSummary> {
    let conv = &ctx.config.convergence;
    let eps: Vec<f64> = conv
        .eps_exponents
        .iter()
        .map(|&e| (-(e as f64)).exp2())
        .collect();
    let mut files = Vec::new();
    let mut slopes = Vec::new();
    let mut curves = Vec::new();
    for (i, p) in conv.profiles.iter().enumerate() {
        let rows = l2_error_curve(p, &eps)?;
        let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
        slopes.push(loglog_slope(&eps, &errs).unwrap_or(f64::NAN));
        let name = format!("oracle1d_{i}.csv");
        report::write_error_curve(&rows, &ctx.out.join(&name))?;
        files.push(name);
        curves.push(rows);
    }
    if conv.strip_cells.len() < 2 {
        return Err(CliError::Config(
            "rate table needs at least two strip grids".into(),
        ));
    }
    let mut rows: Vec<RateRow> = Vec::new();
    for &n in &conv.strip_cells {
        let g = make_grid(GridSpec::strip(1, 1.0, 1.0, n, n))?;
        let a = MatrixField::constant(&g, SymMat::identity(2));
        let bc = BoundaryData::periodic_with_top(manufactured, manufactured);
        let r = dirichlet_solve(&a, &bc, 1e-12)?;
        let l2_error = strip_l2_error(&r.u, manufactured);
        let h = 1.0 / n as f64;
        let local_rate = rows
            .last()
            .map(|p| (l2_error / p.l2_error).ln() / (h / p.h).ln());
        rows.push(RateRow {
            cells: n,
            h,
            l2_error,
            max_principle_excess: r.max_principle_excess(),
            local_rate,
        });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.l2_error).collect();
    let strip_rate = loglog_slope(&hs, &es).unwrap_or(f64::NAN);
    report::write_rates(&rows, &ctx.out.join("strip_rates.csv"))?;
    files.push("strip_rates.csv".into());
    let summary = ConvergenceSummary {
        oracle_slopes: slopes,
        oracle_curves: curves,
        strip_rate,
        strip_rows: rows,
    };
    write_json(&ctx.out, "convergence.json", &summary)?;
    files.push("convergence.json".into());
    let mut manifest = ctx.manifest("convergence")?;
    manifest.files = files;
    manifest.write(&ctx.out)?;
    Ok(summary)
}
