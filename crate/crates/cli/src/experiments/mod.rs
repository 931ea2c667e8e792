//! Canned experiments behind the subcommands.

mod cell;
mod convergence;
mod pipeline;
mod probes;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use cell::{run_cell, CellRun};
pub use convergence::{manufactured, run_convergence, strip_l2_error, ConvergenceSummary};
pub use pipeline::{run_pipeline, solve_pair, PipelineRun, Summary, ZCheck};
pub use probes::{dkp_sweep, run_carleson, run_dkp, CarlesonSummary, DkpSummary, SweepRow};

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::manifest::Manifest;

/// Configuration plus where and how to run it.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub deterministic: bool,
}

impl RunContext {
    /// `out` overrides the configured output directory, which defaults to
    /// `out/<name>`.
    pub fn new(
        config: ExperimentConfig,
        out: Option<PathBuf>,
        deterministic: bool,
    ) -> CliResult<Self> {
        let out = out
            .or_else(|| config.output.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(&config.name));
        std::fs::create_dir_all(&out)?;
        Ok(Self {
            config,
            out,
            deterministic,
        })
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.config
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.out.join("cache"))
    }

    pub fn manifest(&self, command: &str) -> CliResult<Manifest> {
        let canonical = serde_json::to_string(&self.config)?;
        Ok(Manifest::new(
            command,
            &self.config.name,
            &canonical,
            self.deterministic,
        ))
    }
}

fn write_json<T: serde::Serialize>(dir: &Path, file: &str, value: &T) -> CliResult<()> {
    std::fs::write(dir.join(file), serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Wall-clock stages, written next to (not into) the summary so that
/// summaries stay reproducible.
#[derive(Debug, Default, serde::Serialize)]
pub struct Timings {
    stages: Vec<(String, f64)>,
    #[serde(skip)]
    last: Option<Instant>,
}

impl Timings {
    pub fn start() -> Self {
        Self {
            stages: Vec::new(),
            last: Some(Instant::now()),
        }
    }

    pub fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        let secs = self.last.map_or(0.0, |t| (now - t).as_secs_f64());
        log::info!("{stage}: {secs:.2} s");
        self.stages.push((stage.to_string(), secs));
        self.last = Some(now);
    }

    pub fn total(&self) -> f64 {
        self.stages.iter().map(|s| s.1).sum()
    }
}
