use homcarl_core::analysis::{carleson_sup, dkp_carleson_integral, CarlesonDensity, DkpReport};
use homcarl_core::field::{assemble_a, CorrectorLibrary};
use homcarl_core::fit::linear_fit;
use homcarl_core::{make_grid, Grid};
use serde::{Deserialize, Serialize};

use super::{run_cell, solve_pair, write_json, RunContext};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::report;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonSummary {
    pub carleson_sup_u: f64,
    pub carleson_sup_ubar: f64,
    pub carleson_ratio_u: f64,
    pub carleson_ratio_ubar: f64,
}

/// Solves for `u` and `ū` and writes only their Carleson reports.
pub fn run_carleson(ctx: &RunContext) -> CliResult<CarlesonSummary> {
    let cfg = &ctx.config;
    let cell = run_cell(ctx)?;
    let spec = cfg.coefficient_spec();
    let grid = make_grid(cfg.grid_spec())?;
    let a = assemble_a(&spec, &grid, &cell.lib)?;
    let (u, ubar) = solve_pair(cfg, &spec, &grid, &a, &cell.lib)?;
    let band = Some((-(cfg.depth as f64)).exp2());
    let radii = cfg.radii();
    let centers = cfg.tents.centers.as_deref();
    let ru = carleson_sup(&CarlesonDensity::new(&u.u, band)?, centers, &radii)?;
    let rb = carleson_sup(&CarlesonDensity::new(&ubar.u, band)?, centers, &radii)?;
    report::write_carleson(&ru, &ctx.out, "u")?;
    report::write_carleson(&rb, &ctx.out, "ubar")?;
    let summary = CarlesonSummary {
        carleson_sup_u: ru.sup,
        carleson_sup_ubar: rb.sup,
        carleson_ratio_u: ru.ratio,
        carleson_ratio_ubar: rb.ratio,
    };
    write_json(&ctx.out, "carleson.json", &summary)?;
    let mut manifest = ctx.manifest("carleson")?;
    manifest.cache_keys = cell.cache_keys;
    manifest.files = [
        "carleson.json",
        "carleson_u.csv",
        "carleson_u_radii.csv",
        "carleson_ubar.csv",
        "carleson_ubar_radii.csv",
    ]
    .map(String::from)
    .to_vec();
    manifest.write(&ctx.out)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub depth: usize,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DkpSummary {
    pub report: DkpReport,
    /// Totals with the configured field truncated at depths `1..=K`.
    pub sweep: Vec<SweepRow>,
    pub sweep_slope: Option<f64>,
    pub sweep_correlation: Option<f64>,
}

/// DKP totals in the configured tent for the field built with depths
/// `1..=cfg.depth` on the same grid.
pub fn dkp_sweep(
    cfg: &ExperimentConfig,
    grid: &Grid,
    lib: &CorrectorLibrary,
) -> CliResult<Vec<SweepRow>> {
    let tent = cfg.dkp.tent(cfg.n, cfg.x_extent);
    (1..=cfg.depth)
        .map(|depth| {
            let mut spec = cfg.coefficient_spec();
            spec.depth = depth;
            let a = assemble_a(&spec, grid, lib)?;
            let r = dkp_carleson_integral(&a, &tent, depth)?;
            Ok(SweepRow {
                depth,
                total: r.total,
            })
        })
        .collect()
}

/// Assembles `A` only; writes `dkp.csv`, `dkp_sweep.csv` and `dkp.json`.
pub fn run_dkp(ctx: &RunContext) -> CliResult<DkpSummary> {
    let cfg = &ctx.config;
    let cell = run_cell(ctx)?;
    let grid = make_grid(cfg.grid_spec())?;
    let a = assemble_a(&cfg.coefficient_spec(), &grid, &cell.lib)?;
    let report = dkp_carleson_integral(&a, &cfg.dkp.tent(cfg.n, cfg.x_extent), cfg.depth)?;
    report::write_dkp(&report, &ctx.out)?;
    let sweep = dkp_sweep(cfg, &grid, &cell.lib)?;
    let mut w = csv::Writer::from_path(ctx.out.join("dkp_sweep.csv"))?;
    w.write_record(["depth", "total"])?;
    for r in &sweep {
        w.write_record([r.depth.to_string(), format!("{:e}", r.total)])?;
    }
    w.flush()?;
    let x: Vec<f64> = sweep.iter().map(|r| r.depth as f64).collect();
    let y: Vec<f64> = sweep.iter().map(|r| r.total).collect();
    let fit = linear_fit(&x, &y);
    let summary = DkpSummary {
        report,
        sweep,
        sweep_slope: fit.map(|f| f.slope),
        sweep_correlation: fit.map(|f| f.correlation),
    };
    write_json(&ctx.out, "dkp.json", &summary)?;
    let mut manifest = ctx.manifest("dkp")?;
    manifest.cache_keys = cell.cache_keys;
    manifest.files = ["dkp.json", "dkp.csv", "dkp_sweep.csv"]
        .map(String::from)
        .to_vec();
    manifest.write(&ctx.out)?;
    Ok(summary)
}
