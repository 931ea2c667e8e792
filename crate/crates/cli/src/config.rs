use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use homcarl_core::field::{AInfinity, Assignment, CoefficientSpec, EpsilonSchedule};
use homcarl_core::oracle1d::Profile1D;
use homcarl_core::{GridSpec, PeriodicTemplate, TemplateShape};
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryFamily;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomBlocks {
    pub blocks: usize,
    pub lower: f64,
    pub upper: f64,
    /// Defaults to the experiment seed plus the template's position.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A template given either by shape or as a seeded random checkerboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateDef {
    pub label: String,
    #[serde(default)]
    pub shape: Option<TemplateShape>,
    #[serde(default)]
    pub random_checkerboard: Option<RandomBlocks>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub x_cells: usize,
    pub t_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TentConfig {
    /// Radii `2^lo, ..., 2^hi`.
    pub radius_exponents: (i32, i32),
    /// Explicit centers; grid-aligned centers at spacing `R/2` when absent.
    pub centers: Option<Vec<Vec<f64>>>,
}

impl Default for TentConfig {
    fn default() -> Self {
        Self {
            radius_exponents: (-4, 0),
            centers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TentSpec {
    /// Defaults to the middle of the period.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    pub r: f64,
}

impl TentSpec {
    fn half() -> Self {
        Self {
            center: None,
            r: 0.5,
        }
    }

    pub fn tent(&self, n: usize, x_extent: f64) -> homcarl_core::Tent {
        let c = self
            .center
            .clone()
            .unwrap_or_else(|| vec![0.5 * x_extent; n]);
        homcarl_core::Tent::new(&c, self.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: Option<usize>,
    /// Coarsest level of the cascadic solve for `ū`.
    pub nested_min_cells: usize,
    /// Also solve the error equation for `z` and compare with `u - u2s`.
    pub verify_error_equation: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            nested_min_cells: 16,
            verify_error_equation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    pub profiles: Vec<Profile1D>,
    /// `ε = 2^{-e}` for each entry.
    pub eps_exponents: Vec<u32>,
    /// Square strip grids for the manufactured solution.
    pub strip_cells: Vec<usize>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            profiles: vec![Profile1D {
                a: vec![1.0, 3.0],
                f: vec![(0.0, 0.0), (1.0, 1.0)],
            }],
            eps_exponents: (3..=7).collect(),
            strip_cells: vec![64, 128, 256],
        }
    }
}

fn default_one() -> f64 {
    1.0
}
fn default_n() -> usize {
    1
}
fn default_t_top() -> f64 {
    2.0
}
fn default_resolution() -> usize {
    homcarl_core::cell::DEFAULT_CELL_RESOLUTION
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub lambda: f64,
    #[serde(default = "default_one")]
    pub upper: f64,
    /// Horizontal dimension.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_one")]
    pub x_extent: f64,
    #[serde(default = "default_t_top")]
    pub t_top: f64,
    pub grid: GridConfig,
    #[serde(default = "default_resolution")]
    pub cell_resolution: usize,
    pub depth: usize,
    pub schedule: EpsilonSchedule,
    pub templates: Vec<TemplateDef>,
    pub assignment: Assignment,
    pub a_inf: AInfinity,
    pub boundary: BoundaryFamily,
    #[serde(default)]
    pub tents: TentConfig,
    #[serde(default = "TentSpec::half")]
    pub dkp: TentSpec,
    #[serde(default = "TentSpec::half")]
    pub budget: TentSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default = "default_true")]
    pub write_fields: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.lambda > 0.0 && self.lambda <= self.upper) {
            return bad(format!(
                "lambda = {} must lie in (0, upper = {}]",
                self.lambda, self.upper
            ));
        }
        if !(1..=2).contains(&self.n) {
            return bad(format!("horizontal dimension {} not in 1..=2", self.n));
        }
        if self.grid.x_cells == 0 || self.grid.t_cells == 0 {
            return bad("grid needs cells on every axis".into());
        }
        let mut labels = BTreeSet::new();
        for t in &self.templates {
            if !labels.insert(t.label.as_str()) {
                return bad(format!("template {} defined twice", t.label));
            }
            if t.shape.is_some() == t.random_checkerboard.is_some() {
                return bad(format!(
                    "template {} needs exactly one of shape / random_checkerboard",
                    t.label
                ));
            }
        }
        let mut referenced: Vec<&str> = self.assignment.labels();
        if let AInfinity::Homogenized { template } = &self.a_inf {
            referenced.push(template);
        }
        for l in referenced {
            if !labels.contains(l) {
                return bad(format!("template {l} is referenced but not defined"));
            }
        }
        self.schedule.validate().map_err(CliError::from)?;
        for t in &self.convergence.profiles {
            t.validate().map_err(CliError::from)?;
        }
        Ok(())
    }

    /// Concrete templates; random checkerboards draw from `seed + position`
    /// unless they carry their own seed.
    pub fn templates(&self) -> CliResult<Vec<PeriodicTemplate>> {
        let d = self.dim();
        self.templates
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let tpl = match (&t.shape, &t.random_checkerboard) {
                    (Some(shape), None) => {
                        PeriodicTemplate::new(t.label.clone(), d, shape.clone())?
                    }
                    (None, Some(r)) => PeriodicTemplate::random_checkerboard(
                        t.label.clone(),
                        d,
                        r.blocks,
                        r.lower,
                        r.upper,
                        r.seed.unwrap_or(self.seed.wrapping_add(i as u64)),
                    )?,
                    _ => unreachable!("validated"),
                };
                Ok(tpl)
            })
            .collect()
    }

    pub fn coefficient_spec(&self) -> CoefficientSpec {
        CoefficientSpec {
            n: self.n,
            x_extent: self.x_extent,
            depth: self.depth,
            schedule: self.schedule,
            assignment: self.assignment.clone(),
            a_inf: self.a_inf.clone(),
            lower: self.lambda,
            upper: self.upper,
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::strip(
            self.n,
            self.x_extent,
            self.t_top,
            self.grid.x_cells,
            self.grid.t_cells,
        )
    }

    pub fn radii(&self) -> Vec<f64> {
        let (lo, hi) = self.tents.radius_exponents;
        homcarl_core::analysis::dyadic_radii(lo, hi)
    }
}
