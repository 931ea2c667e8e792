use std::collections::BTreeMap;

use homcarl_core::cell::{cache_key, solve_cell};
use homcarl_core::field::CorrectorLibrary;
use homcarl_core::CorrectorSet;
use serde::Serialize;

use super::{write_json, RunContext};
use crate::error::CliResult;

#[derive(Debug, Clone)]
pub struct CellRun {
    pub lib: CorrectorLibrary,
    pub cache_keys: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
struct AbarEntry {
    cache_key: String,
    resolution: usize,
    abar: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    asymmetry: f64,
    divergence_residuals: Vec<f64>,
    corrector_sup: f64,
}

fn load_or_solve(
    set_dir: &std::path::Path,
    t: &homcarl_core::PeriodicTemplate,
    res: usize,
) -> CliResult<CorrectorSet> {
    if set_dir.join("Abar.json").exists() {
        match CorrectorSet::read_dir(set_dir) {
            Ok(s) if s.template == *t && s.resolution == res => {
                log::info!("template {}: cache hit {}", t.label, set_dir.display());
                return Ok(s);
            }
            Ok(_) => log::warn!(
                "cache entry {} does not match; recomputing",
                set_dir.display()
            ),
            Err(e) => log::warn!(
                "unreadable cache entry {}: {e}; recomputing",
                set_dir.display()
            ),
        }
    }
    let set = solve_cell(t, res)?;
    set.write_dir(set_dir)?;
    Ok(set)
}

/// Solves (or loads) the cell problems of every configured template and
/// writes `Abar.json`.
pub fn run_cell(ctx: &RunContext) -> CliResult<CellRun> {
    let cfg = &ctx.config;
    let res = cfg.cell_resolution;
    let cache = ctx.cache_dir();
    let mut lib = CorrectorLibrary::new();
    let mut keys = BTreeMap::new();
    let mut entries = BTreeMap::new();
    for t in cfg.templates()? {
        let key = cache_key(&t, res);
        let set = load_or_solve(&cache.join(&key), &t, res)?;
        let d = t.dim;
        entries.insert(
            t.label.clone(),
            AbarEntry {
                cache_key: key.clone(),
                resolution: res,
                abar: (0..d)
                    .map(|i| (0..d).map(|j| set.abar.get(i, j)).collect())
                    .collect(),
                eigenvalues: set.diagnostics.abar_eigenvalues.clone(),
                asymmetry: set.diagnostics.abar_asymmetry,
                divergence_residuals: set.diagnostics.divergence_residuals.clone(),
                corrector_sup: set.diagnostics.bounds.sup_total(),
            },
        );
        keys.insert(t.label.clone(), key);
        lib.insert(t.label.clone(), set);
    }
    write_json(&ctx.out, "Abar.json", &entries)?;
    Ok(CellRun {
        lib,
        cache_keys: keys,
    })
}
