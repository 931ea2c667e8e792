//! Dirichlet problems `-∇·A∇u = 0` on the truncated strip
//! `[0, x_extent)^N × [0, t_top]` and the error equation `-∇·A∇z = ∇·F`
//! with homogeneous data.
//!
//! The last grid axis is the height `t`; the bottom face is `t = origin`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, FIXED};
use crate::error::{Error, Result};
use crate::grid::{Grid, Location, MatrixField, Point, ScalarField, VectorField};
use crate::linalg::{cg, CgOptions, CsrMatrix};

pub type BoundaryFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Lateral {
    Periodic,
    Dirichlet(BoundaryFn),
}

#[derive(Clone)]
pub enum Top {
    /// `u` equals the horizontal mean of the bottom data.
    Mean,
    Exact(BoundaryFn),
}

/// Dirichlet data: `f` on the bottom face, lateral closure, top closure.
#[derive(Clone)]
pub struct BoundaryData {
    pub f: BoundaryFn,
    pub lateral: Lateral,
    pub top: Top,
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let lateral = match self.lateral {
            Lateral::Periodic => "periodic",
            Lateral::Dirichlet(_) => "dirichlet",
        };
        let top = match self.top {
            Top::Mean => "mean",
            Top::Exact(_) => "exact",
        };
        fm.debug_struct("BoundaryData")
            .field("lateral", &lateral)
            .field("top", &top)
            .finish_non_exhaustive()
    }
}

impl BoundaryData {
    /// Periodic sides, `u = mean f` on top.
    pub fn periodic(f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            lateral: Lateral::Periodic,
            top: Top::Mean,
        }
    }

    /// Periodic sides with a prescribed top trace.
    pub fn periodic_with_top(
        f: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        top: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            lateral: Lateral::Periodic,
            top: Top::Exact(Arc::new(top)),
        }
    }

    /// `u = g` on every non-periodic face.
    pub fn exact(g: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        let g: BoundaryFn = Arc::new(g);
        Self {
            f: g.clone(),
            lateral: Lateral::Dirichlet(g.clone()),
            top: Top::Exact(g),
        }
    }

    /// Homogeneous data on every non-periodic face; lateral closure follows
    /// the grid.
    pub fn homogeneous() -> Self {
        let zero: BoundaryFn = Arc::new(|_| 0.0);
        Self {
            f: zero.clone(),
            lateral: Lateral::Dirichlet(zero.clone()),
            top: Top::Exact(zero),
        }
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        let d = grid.dim();
        let t = d - 1;
        if grid.periodic(t) {
            return Err(Error::InvalidBoundary(
                "the height axis must not be periodic".into(),
            ));
        }
        for a in 0..t {
            match (&self.lateral, grid.periodic(a)) {
                (Lateral::Periodic, false) => {
                    return Err(Error::InvalidBoundary(format!(
                        "periodic lateral data on non-periodic axis {a}"
                    )))
                }
                (Lateral::Dirichlet(_), true) => {}
                _ => {}
            }
        }
        if let Lateral::Periodic = self.lateral {
            // f must be periodic: compare opposite faces along each axis
            for a in 0..t {
                for s in 0..5 {
                    let mut p = [0.0; 3];
                    for b in 0..t {
                        p[b] = grid.origin(b) + grid.extent(b) * (0.13 + 0.17 * s as f64);
                    }
                    p[t] = grid.origin(t);
                    p[a] = grid.origin(a);
                    let lo = (self.f)(&p);
                    p[a] += grid.extent(a);
                    let hi = (self.f)(&p);
                    if (lo - hi).abs() > 1e-9 * (1.0 + lo.abs()) {
                        return Err(Error::InvalidBoundary(format!(
                            "bottom data is not periodic along axis {a}: {lo} vs {hi}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Horizontal mean of `f` over the bottom nodes.
    pub fn bottom_mean(&self, grid: &Grid) -> f64 {
        let t = grid.dim() - 1;
        let (mut s, mut n) = (0.0, 0usize);
        for node in 0..grid.n_nodes() {
            let idx = grid.node_multi(node);
            if idx[t] == 0 {
                s += (self.f)(&grid.node_coords(&idx));
                n += 1;
            }
        }
        s / n as f64
    }
}

/// Reduced system on the free nodes with Dirichlet values lifted into the
/// right-hand side.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub free_nodes: Vec<usize>,
    /// Free index of every node, or `u32::MAX` for Dirichlet nodes.
    pub free_of: Vec<u32>,
    /// Dirichlet values (zero at free nodes).
    pub fixed_values: Vec<f64>,
}

impl LinearSystem {
    pub fn n_free(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn is_fixed(&self, node: usize) -> bool {
        self.free_of[node] == FIXED
    }

    /// Nodal field from free values plus Dirichlet values.
    pub fn expand(&self, grid: &Grid, free: &[f64]) -> Result<ScalarField> {
        let mut v = self.fixed_values.clone();
        for (i, &n) in self.free_nodes.iter().enumerate() {
            v[n] = free[i];
        }
        ScalarField::new(grid.clone(), Location::Node, v)
    }

    /// `(min, max)` of the Dirichlet values.
    pub fn boundary_range(&self) -> (f64, f64) {
        let mut r = (f64::INFINITY, f64::NEG_INFINITY);
        for (n, &f) in self.free_of.iter().enumerate() {
            if f == FIXED {
                r.0 = r.0.min(self.fixed_values[n]);
                r.1 = r.1.max(self.fixed_values[n]);
            }
        }
        r
    }
}

fn dirichlet_layout(grid: &Grid, bc: &BoundaryData) -> Result<(Vec<usize>, Vec<u32>, Vec<f64>)> {
    bc.validate(grid)?;
    let d = grid.dim();
    let t = d - 1;
    let top_index = grid.cell_dims()[t];
    let mean = match bc.top {
        Top::Mean => bc.bottom_mean(grid),
        Top::Exact(_) => 0.0,
    };
    let mut free_nodes = Vec::with_capacity(grid.n_nodes());
    let mut free_of = vec![FIXED; grid.n_nodes()];
    let mut fixed = vec![0.0; grid.n_nodes()];
    for node in 0..grid.n_nodes() {
        let idx = grid.node_multi(node);
        let p = grid.node_coords(&idx);
        let lateral_face =
            (0..t).any(|a| !grid.periodic(a) && (idx[a] == 0 || idx[a] == grid.cell_dims()[a]));
        let value = if idx[t] == 0 {
            Some((bc.f)(&p))
        } else if idx[t] == top_index {
            Some(match &bc.top {
                Top::Mean => mean,
                Top::Exact(g) => g(&p),
            })
        } else if lateral_face {
            match &bc.lateral {
                Lateral::Dirichlet(g) => Some(g(&p)),
                Lateral::Periodic => unreachable!("validated"),
            }
        } else {
            None
        };
        match value {
            Some(v) => {
                if !v.is_finite() {
                    return Err(Error::NonFinite("boundary data"));
                }
                fixed[node] = v;
            }
            None => {
                free_of[node] = free_nodes.len() as u32;
                free_nodes.push(node);
            }
        }
    }
    Ok((free_nodes, free_of, fixed))
}

/// Q1 Galerkin system for `-∇·A∇u = 0` with the given Dirichlet data.
pub fn assemble_system(a: &MatrixField, bc: &BoundaryData) -> Result<LinearSystem> {
    let grid = a.grid();
    let (free_nodes, free_of, fixed_values) = dirichlet_layout(grid, bc)?;
    let (matrix, rhs) =
        Assembler::new(grid).assemble_reduced(a, &free_nodes, &free_of, &fixed_values);
    Ok(LinearSystem {
        matrix,
        rhs,
        free_nodes,
        free_of,
        fixed_values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    /// Defaults to `50 ·` the largest cell count per axis.
    pub max_iter: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            max_iter: None,
        }
    }

    fn cg(&self, grid: &Grid) -> CgOptions {
        let n = grid.cell_dims()[..grid.dim()]
            .iter()
            .copied()
            .max()
            .unwrap_or(1);
        CgOptions {
            tol: self.tol,
            max_iter: self.max_iter.unwrap_or(50 * n + 100),
            zero_mean: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: ScalarField,
    pub residual: f64,
    pub iterations: usize,
    /// `∫ A∇u·∇u`.
    pub energy: f64,
    /// Range of the Dirichlet values.
    pub boundary_range: (f64, f64),
}

/// Serializable part of a [`SolveReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub residual: f64,
    pub iterations: usize,
    pub energy: f64,
    pub max_principle_excess: f64,
}

impl SolveReport {
    /// `max(u - max g, min g - u, 0)` over the grid.
    pub fn max_principle_excess(&self) -> f64 {
        let (lo, hi) = self.u.min_max();
        (hi - self.boundary_range.1)
            .max(self.boundary_range.0 - lo)
            .max(0.0)
    }

    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            residual: self.residual,
            iterations: self.iterations,
            energy: self.energy,
            max_principle_excess: self.max_principle_excess(),
        }
    }
}

pub fn dirichlet_solve(a: &MatrixField, bc: &BoundaryData, tol: f64) -> Result<SolveReport> {
    dirichlet_solve_with(a, bc, &SolveOptions::with_tol(tol), None)
}

/// Dirichlet solve started from `guess` (free values only are used).
pub fn dirichlet_solve_with(
    a: &MatrixField,
    bc: &BoundaryData,
    opts: &SolveOptions,
    guess: Option<&ScalarField>,
) -> Result<SolveReport> {
    let grid = a.grid();
    let sys = assemble_system(a, bc)?;
    let x0: Option<Vec<f64>> = match guess {
        Some(g) => {
            if g.grid() != grid || g.location() != Location::Node {
                return Err(Error::ShapeMismatch(
                    "initial guess must be nodal on the solve grid".into(),
                ));
            }
            Some(sys.free_nodes.iter().map(|&n| g.values()[n]).collect())
        }
        None => None,
    };
    let out = cg(&sys.matrix, &sys.rhs, x0.as_deref(), &opts.cg(grid))?;
    let u = sys.expand(grid, &out.x)?;
    let energy = Assembler::new(grid).energy(a, &u);
    if !energy.is_finite() {
        return Err(Error::NonFinite("solution energy"));
    }
    Ok(SolveReport {
        u,
        residual: out.residual,
        iterations: out.iterations,
        energy,
        boundary_range: sys.boundary_range(),
    })
}

/// Cascadic solve: solve on successively halved grids, using each coarse
/// solution as the initial guess on the next finer grid. `coeff_for` builds
/// the coefficient on any grid of the chain. Coarsening stops once an axis
/// would drop below `min_cells`.
pub fn nested_solve(
    grid: &Grid,
    coeff_for: impl Fn(&Grid) -> Result<MatrixField>,
    bc: &BoundaryData,
    opts: &SolveOptions,
    min_cells: usize,
) -> Result<SolveReport> {
    let mut chain = vec![grid.clone()];
    loop {
        let last = chain.last().expect("non-empty");
        let cells = &last.cell_dims()[..last.dim()];
        if cells
            .iter()
            .any(|&c| c % 2 != 0 || c / 2 < min_cells.max(2))
        {
            break;
        }
        let next = last.coarsened(2)?;
        chain.push(next);
    }
    let mut guess: Option<ScalarField> = None;
    let mut report = None;
    let mut total_it = 0;
    for g in chain.iter().rev() {
        let a = coeff_for(g)?;
        let start = guess.as_ref().map(|u| u.resample(g));
        let r = dirichlet_solve_with(&a, bc, opts, start.as_ref())?;
        log::debug!(
            "nested level {:?}: {} iterations",
            &g.cell_dims()[..g.dim()],
            r.iterations
        );
        total_it += r.iterations;
        guess = Some(r.u.clone());
        report = Some(r);
    }
    let mut r = report.expect("at least one level");
    r.iterations = total_it;
    Ok(r)
}

/// Right-hand side flux of the error equation.
#[derive(Debug, Clone, Copy)]
pub enum FluxTerm<'a> {
    /// Cell-constant flux, one-point quadrature.
    Cellwise(&'a VectorField),
    /// `weight · M∇w` for nodal `w`, integrated exactly against the Q1 basis.
    CoefficientGradient {
        coeff: &'a MatrixField,
        potential: &'a ScalarField,
        weight: f64,
    },
}

/// Solves `-∇·A∇z = ∇·F`, `z = 0` on every non-periodic face, in the weak
/// form `∫ A∇z·∇v = -∫ F·∇v`.
pub fn solve_error_equation(
    a: &MatrixField,
    terms: &[FluxTerm<'_>],
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let grid = a.grid();
    let asm = Assembler::new(grid);
    let mut load = vec![0.0; grid.n_nodes()];
    for term in terms {
        let b = match term {
            FluxTerm::Cellwise(f) => {
                if f.grid() != grid {
                    return Err(Error::ShapeMismatch(
                        "flux lives on a different grid".into(),
                    ));
                }
                asm.flux_load(f)
            }
            FluxTerm::CoefficientGradient {
                coeff,
                potential,
                weight,
            } => {
                if coeff.grid() != grid
                    || potential.grid() != grid
                    || potential.location() != Location::Node
                {
                    return Err(Error::ShapeMismatch(
                        "flux potential lives on a different grid".into(),
                    ));
                }
                let mut b = asm.potential_load(coeff, potential);
                b.iter_mut().for_each(|v| *v *= weight);
                b
            }
        };
        for (l, v) in load.iter_mut().zip(b) {
            *l += v;
        }
    }
    let bc = BoundaryData::homogeneous();
    let bc = if (0..grid.dim() - 1).all(|a| grid.periodic(a)) {
        BoundaryData {
            lateral: Lateral::Periodic,
            ..bc
        }
    } else {
        bc
    };
    let mut sys = assemble_system(a, &bc)?;
    for (i, &n) in sys.free_nodes.iter().enumerate() {
        sys.rhs[i] += load[n];
    }
    let out = cg(&sys.matrix, &sys.rhs, None, &opts.cg(grid))?;
    let z = sys.expand(grid, &out.x)?;
    let energy = asm.energy(a, &z);
    Ok(SolveReport {
        u: z,
        residual: out.residual,
        iterations: out.iterations,
        energy,
        boundary_range: (0.0, 0.0),
    })
}
