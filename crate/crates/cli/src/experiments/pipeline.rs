use homcarl_core::analysis::{
    carleson_sup, dkp_carleson_integral, error_budget, two_scale_expand, BudgetInputs,
    CarlesonDensity, CarlesonReport, DkpReport, ErrorBudget, SlabValue,
};
use homcarl_core::assembly::Assembler;
use homcarl_core::dump;
use homcarl_core::field::{
    assemble_a, assemble_abar, CoefficientSpec, CorrectorLibrary, WhitneyLayout,
};
use homcarl_core::fit::linear_fit;
use homcarl_core::solve::{dirichlet_solve_with, nested_solve, SolveSummary};
use homcarl_core::{
    make_grid, solve_error_equation, BoundaryData, FluxTerm, Grid, MatrixField, ScalarField,
    SolveOptions, SolveReport,
};
use serde::{Deserialize, Serialize};

use super::{run_cell, write_json, RunContext, Timings};
use crate::boundary::BoundaryProfile;
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::report;

/// Agreement of `z = u - u2s` with the solution of the error equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZCheck {
    /// `(R ∧ 1) ∫_{T_R} |∇z|²` for the solved `z`.
    pub z_energy_solved: f64,
    /// `‖∇(z_sub - z_solved)‖_A / ‖∇z_sub‖_A` over the whole strip.
    pub relative_energy_difference: f64,
    pub max_abs_difference: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Every number written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub carleson_sup_u: f64,
    pub carleson_sup_ubar: f64,
    pub carleson_ratio_u: f64,
    pub carleson_ratio_ubar: f64,
    pub dkp_total: f64,
    pub dkp_per_generation: Vec<SlabValue>,
    pub dkp_sub_band: f64,
    pub dkp_above: f64,
    /// Slope and correlation of the cumulative per-generation sums against
    /// the number of generations.
    pub dkp_slope: Option<f64>,
    pub dkp_correlation: Option<f64>,
    pub z_energy: f64,
    pub z_mass: f64,
    pub z_check: Option<ZCheck>,
    pub budget_bulk: f64,
    pub budget_layer: f64,
    pub budget_total: f64,
    pub flux_l2: f64,
    pub solve_u: SolveSummary,
    pub solve_ubar: SolveSummary,
    /// `osc f` on the bottom face.
    pub osc_f: f64,
    /// Largest maximum-principle excess of `u`, `ū` divided by `osc f`.
    pub max_principle_ratio: f64,
}

/// Fields and reports of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub summary: Summary,
    pub spec: CoefficientSpec,
    pub layout: WhitneyLayout,
    pub lib: CorrectorLibrary,
    pub grid: Grid,
    pub a: MatrixField,
    pub abar: MatrixField,
    pub u: ScalarField,
    pub ubar: ScalarField,
    pub u2s: ScalarField,
    pub z: ScalarField,
    pub carleson_u: CarlesonReport,
    pub carleson_ubar: CarlesonReport,
    pub dkp: DkpReport,
    pub budget: ErrorBudget,
}

pub(crate) fn boundary_data(cfg: &ExperimentConfig) -> CliResult<BoundaryData> {
    let f = BoundaryProfile::new(&cfg.boundary, cfg.n, cfg.x_extent, cfg.seed)?;
    Ok(BoundaryData::periodic(move |p| f.eval(p)))
}

pub(crate) fn solve_options(cfg: &ExperimentConfig) -> SolveOptions {
    SolveOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
    }
}

/// `ū` by a cascadic solve, then `u` started from `ū`.
pub fn solve_pair(
    cfg: &ExperimentConfig,
    spec: &CoefficientSpec,
    grid: &Grid,
    a: &MatrixField,
    lib: &CorrectorLibrary,
) -> CliResult<(SolveReport, SolveReport)> {
    let bc = boundary_data(cfg)?;
    let opts = solve_options(cfg);
    let ubar = nested_solve(
        grid,
        |g| assemble_abar(spec, g, lib),
        &bc,
        &opts,
        cfg.solver.nested_min_cells,
    )?;
    log::info!(
        "ū: {} iterations, residual {:.2e}",
        ubar.iterations,
        ubar.residual
    );
    let u = dirichlet_solve_with(a, &bc, &opts, Some(&ubar.u))?;
    log::info!(
        "u: {} iterations, residual {:.2e}",
        u.iterations,
        u.residual
    );
    Ok((u, ubar))
}

fn cumulative_fit(per_generation: &[SlabValue]) -> (Option<f64>, Option<f64>) {
    let mut acc = 0.0;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, s) in per_generation.iter().enumerate() {
        acc += s.value;
        x.push((i + 1) as f64);
        y.push(acc);
    }
    match linear_fit(&x, &y) {
        Some(f) => (Some(f.slope), Some(f.correlation)),
        None => (None, None),
    }
}

fn verify_error_equation(
    inp: &BudgetInputs<'_>,
    z: &ScalarField,
    tent: &homcarl_core::Tent,
    opts: &SolveOptions,
) -> CliResult<ZCheck> {
    let (a, abar, ubar, u2s) = (inp.a, inp.abar, inp.ubar, inp.u2s);
    let terms = [
        FluxTerm::CoefficientGradient {
            coeff: a,
            potential: u2s,
            weight: 1.0,
        },
        FluxTerm::CoefficientGradient {
            coeff: abar,
            potential: ubar,
            weight: -1.0,
        },
    ];
    let solved = solve_error_equation(a, &terms, opts)?;
    let asm = Assembler::new(a.grid());
    let diff = z.sub(&solved.u)?;
    let denom = asm.energy(a, z).sqrt();
    let rel = if denom > 0.0 {
        asm.energy(a, &diff).sqrt() / denom
    } else {
        asm.energy(a, &diff).sqrt()
    };
    let b = homcarl_core::analysis::error_budget_with_z(inp, tent, &solved.u)?;
    Ok(ZCheck {
        z_energy_solved: b.z_energy,
        relative_energy_difference: rel,
        max_abs_difference: diff.max_abs(),
        residual: solved.residual,
        iterations: solved.iterations,
    })
}

/// Cell problems, coefficient assembly, both solves, two-scale expansion,
/// Carleson, DKP and budget reports; writes `summary.json`, CSV reports,
/// field dumps and the manifest.
pub fn run_pipeline(ctx: &RunContext) -> CliResult<PipelineRun> {
    let cfg = &ctx.config;
    let mut clock = Timings::start();
    let cell = run_cell(ctx)?;
    clock.lap("cell problems");
    let lib = cell.lib;
    let spec = cfg.coefficient_spec();
    let layout = spec.layout()?;
    let grid = make_grid(cfg.grid_spec())?;
    let a = assemble_a(&spec, &grid, &lib)?;
    let abar = assemble_abar(&spec, &grid, &lib)?;
    clock.lap("assembly");
    let (u_rep, ubar_rep) = solve_pair(cfg, &spec, &grid, &a, &lib)?;
    clock.lap("solves");
    let u2s = two_scale_expand(&ubar_rep.u, &layout, &lib)?;
    let z = u_rep.u.sub(&u2s)?;

    let band = Some((-(cfg.depth as f64)).exp2());
    let centers = cfg.tents.centers.as_deref();
    let radii = cfg.radii();
    let carleson_u = carleson_sup(&CarlesonDensity::new(&u_rep.u, band)?, centers, &radii)?;
    let carleson_ubar = carleson_sup(&CarlesonDensity::new(&ubar_rep.u, band)?, centers, &radii)?;
    clock.lap("carleson");
    let dkp = dkp_carleson_integral(&a, &cfg.dkp.tent(cfg.n, cfg.x_extent), cfg.depth)?;
    clock.lap("dkp");
    let inp = BudgetInputs {
        a: &a,
        abar: &abar,
        u: &u_rep.u,
        ubar: &ubar_rep.u,
        u2s: &u2s,
        layout: &layout,
        lib: &lib,
    };
    let tent = cfg.budget.tent(cfg.n, cfg.x_extent);
    let budget = error_budget(&inp, &tent)?;
    clock.lap("budget");
    let z_check = if cfg.solver.verify_error_equation {
        let c = verify_error_equation(&inp, &z, &tent, &solve_options(cfg))?;
        clock.lap("error equation");
        Some(c)
    } else {
        None
    };

    let (lo, hi) = u_rep.boundary_range;
    let osc = hi - lo;
    let excess = u_rep
        .max_principle_excess()
        .max(ubar_rep.max_principle_excess());
    let (dkp_slope, dkp_correlation) = cumulative_fit(&dkp.per_generation);
    let summary = Summary {
        name: cfg.name.clone(),
        carleson_sup_u: carleson_u.sup,
        carleson_sup_ubar: carleson_ubar.sup,
        carleson_ratio_u: carleson_u.ratio,
        carleson_ratio_ubar: carleson_ubar.ratio,
        dkp_total: dkp.total,
        dkp_per_generation: dkp.per_generation.clone(),
        dkp_sub_band: dkp.sub_band,
        dkp_above: dkp.above,
        dkp_slope,
        dkp_correlation,
        z_energy: budget.z_energy,
        z_mass: budget.z_mass,
        z_check,
        budget_bulk: budget.bulk,
        budget_layer: budget.layer,
        budget_total: budget.total,
        flux_l2: budget.flux_l2,
        solve_u: u_rep.summary(),
        solve_ubar: ubar_rep.summary(),
        osc_f: osc,
        max_principle_ratio: if osc > 0.0 { excess / osc } else { excess },
    };

    let out = &ctx.out;
    let mut files = vec!["summary.json".to_string(), "Abar.json".into()];
    write_json(out, "summary.json", &summary)?;
    report::write_carleson(&carleson_u, out, "u")?;
    report::write_carleson(&carleson_ubar, out, "ubar")?;
    report::write_dkp(&dkp, out)?;
    report::write_budget(&budget, out)?;
    files.extend(
        [
            "carleson_u.csv",
            "carleson_u_radii.csv",
            "carleson_ubar.csv",
            "carleson_ubar_radii.csv",
            "dkp.csv",
            "budget.csv",
        ]
        .map(String::from),
    );
    write_json(out, "solve_u.json", &u_rep.summary())?;
    write_json(out, "solve_ubar.json", &ubar_rep.summary())?;
    files.extend(["solve_u.json", "solve_ubar.json"].map(String::from));
    if cfg.write_fields {
        let dir = out.join("fields");
        std::fs::create_dir_all(&dir)?;
        for (stem, f) in [
            ("u", &u_rep.u),
            ("ubar", &ubar_rep.u),
            ("u2s", &u2s),
            ("z", &z),
        ] {
            dump::write_binary(f, &dir, stem)?;
            files.push(format!("fields/{stem}.bin"));
        }
    }
    clock.lap("output");
    write_json(out, "timings.json", &clock)?;
    let mut manifest = ctx.manifest("pipeline")?;
    manifest.cache_keys = cell.cache_keys;
    manifest.files = files;
    manifest.write(out)?;
    log::info!("pipeline {} finished in {:.1} s", cfg.name, clock.total());

    Ok(PipelineRun {
        summary,
        spec,
        layout,
        lib,
        grid,
        a,
        abar,
        u: u_rep.u,
        ubar: ubar_rep.u,
        u2s,
        z,
        carleson_u,
        carleson_ubar,
        dkp,
        budget,
    })
}
