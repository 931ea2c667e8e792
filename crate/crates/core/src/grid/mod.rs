//! Structured rectangular grids on axis-aligned boxes.
//!
//! Nodes and cells are enumerated with axis 0 varying fastest. On a periodic
//! axis the last node layer is identified with the first, so that axis
//! carries `cells[a]` distinct nodes instead of `cells[a] + 1`.

mod element;
mod field;
mod ops;
mod sym;

pub use element::Q1Element;
pub use field::{Location, MatrixField, ScalarField, VectorField};
pub use ops::{cell_overlaps, gradient, integrate, integrate_cells, AxisBox};
pub use sym::SymMat;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-index and point types; components beyond `dim` are unused.
pub type Idx = [usize; 3];
pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub origin: Vec<f64>,
    pub extent: Vec<f64>,
    pub cells: Vec<usize>,
    pub periodic: Vec<bool>,
}

impl GridSpec {
    /// Unit box `[0,1)^dim` with every axis periodic: the cell `Q`.
    pub fn unit_cell(dim: usize, cells_per_axis: usize) -> Self {
        Self {
            dim,
            origin: vec![0.0; dim],
            extent: vec![1.0; dim],
            cells: vec![cells_per_axis; dim],
            periodic: vec![true; dim],
        }
    }

    /// Strip `[0, x_extent)^N x [0, t_top]`, periodic in the horizontal axes.
    pub fn strip(n: usize, x_extent: f64, t_top: f64, x_cells: usize, t_cells: usize) -> Self {
        let dim = n + 1;
        let mut extent = vec![x_extent; dim];
        extent[n] = t_top;
        let mut cells = vec![x_cells; dim];
        cells[n] = t_cells;
        let mut periodic = vec![true; dim];
        periodic[n] = false;
        Self {
            dim,
            origin: vec![0.0; dim],
            extent,
            cells,
            periodic,
        }
    }
}

/// A validated grid with derived spacings and enumeration strides.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    h: Point,
    node_dims: Idx,
    cell_dims: Idx,
    n_nodes: usize,
    n_cells: usize,
}

pub fn make_grid(spec: GridSpec) -> Result<Grid> {
    Grid::new(spec)
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        let d = spec.dim;
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidGrid(format!("dimension {d} not in 1..=3")));
        }
        if spec.origin.len() != d
            || spec.extent.len() != d
            || spec.cells.len() != d
            || spec.periodic.len() != d
        {
            return Err(Error::InvalidGrid(
                "per-axis vectors must have length dim".into(),
            ));
        }
        let mut h = [0.0; 3];
        let mut node_dims = [1usize; 3];
        let mut cell_dims = [1usize; 3];
        for a in 0..d {
            let e = spec.extent[a];
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "extent along axis {a} must be positive, got {e}"
                )));
            }
            if spec.cells[a] < 2 {
                return Err(Error::InvalidGrid(format!(
                    "need at least 2 cells along axis {a}, got {}",
                    spec.cells[a]
                )));
            }
            h[a] = e / spec.cells[a] as f64;
            cell_dims[a] = spec.cells[a];
            node_dims[a] = if spec.periodic[a] {
                spec.cells[a]
            } else {
                spec.cells[a] + 1
            };
        }
        let n_nodes = node_dims.iter().product();
        let n_cells = cell_dims.iter().product();
        Ok(Self {
            spec,
            h,
            node_dims,
            cell_dims,
            n_nodes,
            n_cells,
        })
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    #[inline]
    pub fn dim(&self) -> usize {
        self.spec.dim
    }
    #[inline]
    pub fn h(&self) -> &Point {
        &self.h
    }
    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }
    #[inline]
    pub fn node_dims(&self) -> &Idx {
        &self.node_dims
    }
    #[inline]
    pub fn cell_dims(&self) -> &Idx {
        &self.cell_dims
    }
    #[inline]
    pub fn periodic(&self, axis: usize) -> bool {
        self.spec.periodic[axis]
    }
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.h[a]).product()
    }
    pub fn volume(&self) -> f64 {
        self.spec.extent.iter().product()
    }
    pub fn origin(&self, axis: usize) -> f64 {
        self.spec.origin[axis]
    }
    pub fn extent(&self, axis: usize) -> f64 {
        self.spec.extent[axis]
    }

    #[inline]
    pub fn node_index(&self, idx: &Idx) -> usize {
        let nd = &self.node_dims;
        idx[0] + nd[0] * (idx[1] + nd[1] * idx[2])
    }

    #[inline]
    pub fn node_multi(&self, mut n: usize) -> Idx {
        let nd = &self.node_dims;
        let i0 = n % nd[0];
        n /= nd[0];
        let i1 = n % nd[1];
        [i0, i1, n / nd[1]]
    }

    #[inline]
    pub fn cell_index(&self, idx: &Idx) -> usize {
        let cd = &self.cell_dims;
        idx[0] + cd[0] * (idx[1] + cd[1] * idx[2])
    }

    #[inline]
    pub fn cell_multi(&self, mut c: usize) -> Idx {
        let cd = &self.cell_dims;
        let i0 = c % cd[0];
        c /= cd[0];
        let i1 = c % cd[1];
        [i0, i1, c / cd[1]]
    }

    #[inline]
    pub fn node_coords(&self, idx: &Idx) -> Point {
        let mut p = [0.0; 3];
        for a in 0..self.dim() {
            p[a] = self.spec.origin[a] + idx[a] as f64 * self.h[a];
        }
        p
    }

    #[inline]
    pub fn cell_center(&self, idx: &Idx) -> Point {
        let mut p = [0.0; 3];
        for a in 0..self.dim() {
            p[a] = self.spec.origin[a] + (idx[a] as f64 + 0.5) * self.h[a];
        }
        p
    }

    /// Global node index of local corner `local` (bit `a` = upper along axis
    /// `a`) of the cell with multi-index `cell`.
    #[inline]
    pub fn cell_corner(&self, cell: &Idx, local: usize) -> usize {
        let mut idx = [0usize; 3];
        for a in 0..self.dim() {
            let mut i = cell[a] + ((local >> a) & 1);
            if i == self.node_dims[a] {
                // only reachable on periodic axes
                i = 0;
            }
            idx[a] = i;
        }
        self.node_index(&idx)
    }

    /// Global node indices of all `2^dim` corners of a cell.
    pub fn cell_corners(&self, cell: &Idx, out: &mut [usize; 8]) {
        for l in 0..(1usize << self.dim()) {
            out[l] = self.cell_corner(cell, l);
        }
    }

    /// Whether a node lies on a non-periodic boundary face.
    pub fn is_boundary_node(&self, idx: &Idx) -> bool {
        (0..self.dim()).any(|a| !self.periodic(a) && (idx[a] == 0 || idx[a] == self.cell_dims[a]))
    }

    /// Multi-index of the cell containing `p` (clamped to the grid, wrapped on
    /// periodic axes).
    pub fn locate_cell(&self, p: &Point) -> Idx {
        let mut idx = [0usize; 3];
        for a in 0..self.dim() {
            let rel = (p[a] - self.spec.origin[a]) / self.h[a];
            let n = self.cell_dims[a] as i64;
            let mut i = rel.floor() as i64;
            if self.periodic(a) {
                i = i.rem_euclid(n);
            } else {
                i = i.clamp(0, n - 1);
            }
            idx[a] = i as usize;
        }
        idx
    }

    /// Same topology with every axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Grid> {
        let mut spec = self.spec.clone();
        for c in spec.cells.iter_mut() {
            *c *= factor;
        }
        Grid::new(spec)
    }

    pub fn coarsened(&self, factor: usize) -> Result<Grid> {
        let mut spec = self.spec.clone();
        for c in spec.cells.iter_mut() {
            if *c % factor != 0 {
                return Err(Error::InvalidGrid(format!(
                    "{c} cells not divisible by {factor}"
                )));
            }
            *c /= factor;
        }
        Grid::new(spec)
    }
}
