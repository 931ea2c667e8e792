//! CSV emitters. Column schemas are listed in the README.

use std::path::Path;

use homcarl_core::analysis::{CarlesonReport, DkpReport, ErrorBudget};
use homcarl_core::oracle1d::ErrorRow;

use crate::error::CliResult;

fn center_header(n: usize) -> Vec<String> {
    (0..n).map(|a| format!("center_{a}")).collect()
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// `carleson_<stem>.csv` (one row per tent) and `carleson_<stem>_radii.csv`.
pub fn write_carleson(report: &CarlesonReport, dir: &Path, stem: &str) -> CliResult<()> {
    let n = report.rows.first().map_or(1, |r| r.center.len());
    let mut w = csv::Writer::from_path(dir.join(format!("carleson_{stem}.csv")))?;
    let mut header = center_header(n);
    header.extend(["r", "raw", "normalized", "sub_band"].map(String::from));
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec: Vec<String> = row.center.iter().map(|&c| fmt(c)).collect();
        rec.extend([row.r, row.raw, row.normalized, row.sub_band].map(fmt));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join(format!("carleson_{stem}_radii.csv")))?;
    let mut header = vec![
        "r".to_string(),
        "max_normalized".into(),
        "max_sub_band".into(),
    ];
    header.extend(center_header(n).into_iter().map(|c| format!("argmax_{c}")));
    w.write_record(&header)?;
    for s in &report.per_radius {
        let mut rec = vec![fmt(s.r), fmt(s.max_normalized), fmt(s.max_sub_band)];
        rec.extend(s.argmax_center.iter().map(|&c| fmt(c)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `dkp.csv`: one row per slab; `k` is empty for the sub-band and top rows.
pub fn write_dkp(report: &DkpReport, dir: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join("dkp.csv"))?;
    w.write_record(["slab", "k", "t_lo", "t_hi", "value"])?;
    for s in &report.per_generation {
        let lo = (s.k as f64).exp2();
        w.write_record([
            "generation",
            &s.k.to_string(),
            &fmt(lo),
            &fmt(2.0 * lo),
            &fmt(s.value),
        ])?;
    }
    w.write_record(["sub_band", "", "0", "", &fmt(report.sub_band)])?;
    w.write_record(["above", "", "1", "", &fmt(report.above)])?;
    w.write_record(["total", "", "", "", &fmt(report.total)])?;
    w.flush()?;
    Ok(())
}

/// `budget.csv`: one row per Whitney box meeting `T_{2R}`.
pub fn write_budget(budget: &ErrorBudget, dir: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join("budget.csv"))?;
    let n = budget.tent.center.len();
    let mut header = vec!["k".to_string()];
    header.extend((0..n).map(|a| format!("j_{a}")));
    header.extend(["template", "eps", "eta", "kappa", "bulk", "layer"].map(String::from));
    w.write_record(&header)?;
    for b in &budget.boxes {
        let mut rec = vec![b.k.to_string()];
        rec.extend(b.j.iter().map(|j| j.to_string()));
        rec.push(b.template.clone());
        rec.extend([b.eps, b.eta, b.kappa, b.bulk, b.layer].map(fmt));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `oracle1d_<index>.csv`: `eps, error, local_slope`.
pub fn write_error_curve(rows: &[ErrorRow], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["eps", "error", "local_slope"])?;
    for r in rows {
        w.write_record([
            fmt(r.eps),
            fmt(r.error),
            r.local_slope.map(fmt).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateRow {
    pub cells: usize,
    pub h: f64,
    pub l2_error: f64,
    pub max_principle_excess: f64,
    pub local_rate: Option<f64>,
}

/// `strip_rates.csv`.
pub fn write_rates(rows: &[RateRow], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "cells",
        "h",
        "l2_error",
        "max_principle_excess",
        "local_rate",
    ])?;
    for r in rows {
        w.write_record([
            r.cells.to_string(),
            fmt(r.h),
            fmt(r.l2_error),
            fmt(r.max_principle_excess),
            r.local_rate.map(fmt).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
