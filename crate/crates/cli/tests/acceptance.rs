//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use homcarl_cli::config::ExperimentConfig;
use homcarl_cli::experiments::{
    dkp_sweep, run_cell, run_convergence, run_pipeline, PipelineRun, RunContext,
};
use homcarl_core::fit::linear_fit;
use homcarl_core::{
    l2_error_curve, solve_cell, PeriodicTemplate, Point, Profile1D, SymMat, TemplateShape,
    WhitneyBox,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn out_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"));
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn context(cfg: ExperimentConfig, dir: &str) -> RunContext {
    RunContext::new(cfg, Some(out_root().join(dir)), false).expect("output directory")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn laminate() -> Outcome {
    let start = Instant::now();
    let t = PeriodicTemplate::laminate("lam13", 2, 0, vec![1.0, 3.0]).unwrap();
    let set = solve_cell(&t, 128).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let expect = [1.5, 0.0, 0.0, 2.0];
    let got = set.abar.to_full();
    // zero entries: relative to the diagonal scale
    let err = got
        .iter()
        .zip(expect)
        .map(|(g, e)| if e == 0.0 { g.abs() / 1.5 } else { rel(*g, e) })
        .fold(0.0, f64::max);
    Outcome::new(
        err <= 0.01 && secs < 10.0,
        format!("Abar = {got:?}, max rel err {err:.2e}, {secs:.2} s"),
    )
}

fn voigt_reuss() -> Outcome {
    let start = Instant::now();
    let mut worst = f64::INFINITY;
    for seed in 1..=5u64 {
        let t = PeriodicTemplate::random_checkerboard(format!("cb{seed}"), 2, 4, 0.25, 1.0, seed)
            .unwrap();
        let set = solve_cell(&t, 128).unwrap();
        let TemplateShape::Checkerboard { values, .. } = &t.shape else {
            unreachable!()
        };
        let m = values.len() as f64;
        let arith = values.iter().sum::<f64>() / m;
        let harm = m / values.iter().map(|v| 1.0 / v).sum::<f64>();
        let lower = set.abar.sub(&SymMat::scalar(2, harm)).min_eigenvalue();
        let upper = SymMat::scalar(2, arith).sub(&set.abar).min_eigenvalue();
        worst = worst.min(lower).min(upper);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst >= -1e-6 && secs < 60.0,
        format!("min eigenvalue of the bound gaps {worst:.3e} over 5 seeds, {secs:.1} s"),
    )
}

fn flux_corrector() -> Outcome {
    let t = PeriodicTemplate::new(
        "smooth",
        2,
        TemplateShape::Smooth {
            base: 0.6,
            amplitude: 0.35,
        },
    )
    .unwrap();
    let res = |n: usize| {
        let set = solve_cell(&t, n).unwrap();
        set.diagnostics
            .divergence_residuals
            .iter()
            .copied()
            .fold(0.0, f64::max)
    };
    let (r128, r256) = (res(128), res(256));
    Outcome::new(
        r128 <= 1e-3 && r256 <= 0.5 * r128,
        format!(
            "residual {r128:.3e} at 128, {r256:.3e} at 256, ratio {:.3}",
            r256 / r128
        ),
    )
}

fn oracle_rate() -> Outcome {
    let start = Instant::now();
    let profile = Profile1D::linear_forcing(vec![1.0, 3.0]).unwrap();
    let eps: Vec<f64> = (3..=7).map(|k| (-(k as f64)).exp2()).collect();
    let rows = l2_error_curve(&profile, &eps).unwrap();
    let x: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.error.ln()).collect();
    let slope = linear_fit(&x, &y).map_or(f64::NAN, |f| f.slope);
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        (0.9..=1.1).contains(&slope) && secs < 5.0,
        format!("slope {slope:.4}, {secs:.3} s"),
    )
}

fn strip_solver(runs: &[(&str, f64)]) -> Outcome {
    let ctx = context(config("convergence"), "convergence");
    let s = run_convergence(&ctx).unwrap();
    let strip_excess = s
        .strip_rows
        .iter()
        .map(|r| r.max_principle_excess)
        .fold(0.0, f64::max);
    let worst = runs.iter().map(|r| r.1).fold(strip_excess, f64::max);
    let listed: Vec<String> = runs.iter().map(|(n, k)| format!("{n} {k:.1e}")).collect();
    Outcome::new(
        s.strip_rate >= 1.8 && worst <= 1e-2,
        format!(
            "L2 rate {:.3}; max-principle excess / osc f: strip {strip_excess:.1e}, {}",
            s.strip_rate,
            listed.join(", ")
        ),
    )
}

fn headline(run: &PipelineRun, secs: f64) -> Outcome {
    let s = &run.summary;
    Outcome::new(
        s.carleson_ratio_u <= 8.0 && s.carleson_sup_u <= 4.0 * s.carleson_sup_ubar && secs < 600.0,
        format!(
            "ratio {:.3}, sup u {:.4e}, sup ubar {:.4e}, {secs:.0} s",
            s.carleson_ratio_u, s.carleson_sup_u, s.carleson_sup_ubar
        ),
    )
}

fn dkp_growth(run: &PipelineRun, cfg: &ExperimentConfig) -> Outcome {
    let gens = &run.summary.dkp_per_generation;
    let ratios: Vec<f64> = gens.windows(2).map(|w| w[1].value / w[0].value).collect();
    let ratios_ok = !ratios.is_empty() && ratios.iter().all(|r| (0.5..=2.0).contains(r));
    let sweep = dkp_sweep(cfg, &run.grid, &run.lib).unwrap();
    let x: Vec<f64> = sweep.iter().map(|r| r.depth as f64).collect();
    let y: Vec<f64> = sweep.iter().map(|r| r.total).collect();
    let fit = linear_fit(&x, &y);
    let corr = fit.as_ref().map_or(f64::NAN, |f| f.correlation);
    let slope = fit.as_ref().map_or(f64::NAN, |f| f.slope);
    Outcome::new(
        ratios_ok && corr >= 0.99 && slope > 0.0,
        format!("consecutive ratios {ratios:.3?}; totals {y:.4?}, slope {slope:.4}, correlation {corr:.6}"),
    )
}

fn two_scale(runs: &[&PipelineRun; 2]) -> Outcome {
    let e = [runs[0].summary.z_energy, runs[1].summary.z_energy];
    let ratio = e[1] / e[0];
    let agree = runs
        .iter()
        .map(|r| {
            r.summary
                .z_check
                .as_ref()
                .map_or(f64::INFINITY, |z| z.relative_energy_difference)
        })
        .fold(0.0, f64::max);
    Outcome::new(
        ratio <= 0.75 && agree <= 1e-6,
        format!(
            "z energy {:.4e} -> {:.4e}, ratio {ratio:.3}; subtraction vs solve rel diff {agree:.1e}",
            e[0], e[1]
        ),
    )
}

/// Integral of `f` over the axis box `[lo, hi]` using midpoints of the
/// intersections with a grid of spacing `h`.
fn box_integral(lo: &[f64; 2], hi: &[f64; 2], h: f64, f: impl Fn(&Point) -> f64) -> f64 {
    let spans: Vec<Vec<(f64, f64)>> = (0..2)
        .map(|a| {
            let mut v = Vec::new();
            let mut i = (lo[a] / h).floor() as i64;
            while (i as f64) * h < hi[a] {
                let (s, e) = ((i as f64 * h).max(lo[a]), ((i + 1) as f64 * h).min(hi[a]));
                if e > s {
                    v.push((0.5 * (s + e), e - s));
                }
                i += 1;
            }
            v
        })
        .collect();
    let mut acc = 0.0;
    for &(t, wt) in &spans[1] {
        for &(x, wx) in &spans[0] {
            acc += wx * wt * f(&[x, t, 0.0]);
        }
    }
    acc
}

fn corners(b: &WhitneyBox, shrink: f64) -> ([f64; 2], [f64; 2]) {
    let r = b.shrunk(shrink);
    ([r.lo[0], r.lo[1]], [r.hi[0], r.hi[1]])
}

fn budget_quadrature(run: &PipelineRun, cfg: &ExperimentConfig) -> Outcome {
    let abar = run.lib.values().next().unwrap().abar;
    let (p, q) = (abar.get(0, 0), abar.get(1, 1));
    let tt = cfg.t_top;
    let kap = 2.0 * PI * (p / q).sqrt();
    let s = |t: f64| (kap * (tt - t)).sinh() / (kap * tt).sinh();
    let ds = |t: f64| -kap * (kap * (tt - t)).cosh() / (kap * tt).sinh();
    let grad2 = |z: &Point| {
        let w = 2.0 * PI * z[0];
        let gx = -2.0 * PI * w.sin() * s(z[1]);
        let gt = w.cos() * ds(z[1]);
        gx * gx + gt * gt
    };
    let hess2 = |z: &Point| {
        let w = 2.0 * PI * z[0];
        let hxx = -4.0 * PI * PI * w.cos() * s(z[1]);
        let hxt = -2.0 * PI * w.sin() * ds(z[1]);
        let htt = kap * kap * w.cos() * s(z[1]);
        hxx * hxx + 2.0 * hxt * hxt + htt * htt
    };
    let h = 0.5 * run.grid.h()[0];
    let x_extent = run.layout.x_extent;
    let (mut bulk, mut layer) = (0.0, 0.0);
    for bb in &run.budget.boxes {
        let b = run
            .layout
            .boxes
            .iter()
            .find(|w| w.k == bb.k && w.j == bb.j)
            .expect("budget box in layout");
        let (lo, hi) = corners(b, 0.0);
        let chi_h = box_integral(&lo, &hi, h, |z| b.chi(z, x_extent).powi(2) * hess2(z));
        bulk += bb.kappa * b.period().powi(2) * chi_h;
        let (ilo, ihi) = corners(b, b.eta);
        let ring = box_integral(&lo, &hi, h, grad2) - box_integral(&ilo, &ihi, h, grad2);
        layer += bb.kappa * (1.0 + (b.eps / b.eta).powi(2)) * ring;
    }
    let (eb, el) = (
        rel(run.summary.budget_bulk, bulk),
        rel(run.summary.budget_layer, layer),
    );
    let gens: std::collections::BTreeSet<i32> = run.budget.boxes.iter().map(|b| b.k).collect();
    Outcome::new(
        eb <= 0.05 && el <= 0.05 && gens.len() == 2,
        format!(
            "bulk {:.4e} vs {bulk:.4e} (rel {eb:.2e}); layer {:.4e} vs {layer:.4e} (rel {el:.2e}); {} boxes",
            run.summary.budget_bulk,
            run.summary.budget_layer,
            run.budget.boxes.len()
        ),
    )
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    std::fs::create_dir_all(out_root()).expect("output root");
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "laminate homogenization", laminate()),
        (2, "Voigt-Reuss bounds", voigt_reuss()),
        (3, "flux corrector consistency", flux_corrector()),
        (4, "1-D oracle rate", oracle_rate()),
    ];

    // cell cache shared by the pipeline runs
    let headline_cfg = config("headline");
    let start = Instant::now();
    let head = run_pipeline(&context(headline_cfg.clone(), "headline")).unwrap();
    let head_secs = start.elapsed().as_secs_f64();

    let coarse_cfg = config("two_scale");
    let mut fine_cfg = coarse_cfg.clone();
    fine_cfg.name = "two_scale_half".into();
    fine_cfg.schedule.c *= 0.5;
    let coarse = run_pipeline(&context(coarse_cfg, "two_scale")).unwrap();
    let fine = run_pipeline(&context(fine_cfg, "two_scale_half")).unwrap();

    let budget_cfg = config("budget");
    let budget = run_pipeline(&context(budget_cfg.clone(), "budget")).unwrap();
    // sanity: the cell stage alone reproduces the cached library
    let cell = run_cell(&context(budget_cfg.clone(), "budget")).unwrap();
    assert_eq!(cell.lib.len(), budget.lib.len());

    let kappas = [
        ("headline", head.summary.max_principle_ratio),
        ("two_scale", coarse.summary.max_principle_ratio),
        ("two_scale_half", fine.summary.max_principle_ratio),
        ("budget", budget.summary.max_principle_ratio),
    ];
    results.push((5, "strip solver validation", strip_solver(&kappas)));
    results.push((6, "headline Carleson stability", headline(&head, head_secs)));
    results.push((7, "DKP violation", dkp_growth(&head, &headline_cfg)));
    results.push((8, "two-scale error scaling", two_scale(&[&coarse, &fine])));
    results.push((
        9,
        "budget decomposition",
        budget_quadrature(&budget, &budget_cfg),
    ));

    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{tag} [{id}] {name}: {}", o.detail);
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
