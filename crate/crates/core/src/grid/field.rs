use serde::{Deserialize, Serialize};

use super::{Grid, Idx, Point, SymMat};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Node,
    Cell,
}

/// Scalar values on the nodes or cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    location: Location,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, location: Location, values: Vec<f64>) -> Result<Self> {
        let expected = match location {
            Location::Node => grid.n_nodes(),
            Location::Cell => grid.n_cells(),
        };
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{location:?} field needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            grid,
            location,
            values,
        })
    }

    pub fn zeros(grid: &Grid, location: Location) -> Self {
        let n = match location {
            Location::Node => grid.n_nodes(),
            Location::Cell => grid.n_cells(),
        };
        Self {
            grid: grid.clone(),
            location,
            values: vec![0.0; n],
        }
    }

    pub fn from_node_fn(grid: &Grid, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.n_nodes())
            .map(|n| f(&grid.node_coords(&grid.node_multi(n))))
            .collect();
        Self {
            grid: grid.clone(),
            location: Location::Node,
            values,
        }
    }

    pub fn from_cell_fn(grid: &Grid, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.n_cells())
            .map(|c| f(&grid.cell_center(&grid.cell_multi(c))))
            .collect();
        Self {
            grid: grid.clone(),
            location: Location::Cell,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn location(&self) -> Location {
        self.location
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Pointwise `self - other` on the same grid and location.
    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        if self.grid != other.grid || self.location != other.location {
            return Err(Error::ShapeMismatch(
                "fields live on different grids".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            location: self.location,
            values,
        })
    }

    /// Cell values of a nodal field by averaging the cell corners, which is
    /// the multilinear interpolant at the cell center.
    pub fn to_cells(&self) -> ScalarField {
        if self.location == Location::Cell {
            return self.clone();
        }
        let g = &self.grid;
        let nloc = 1usize << g.dim();
        let w = 1.0 / nloc as f64;
        let mut corners = [0usize; 8];
        let values = (0..g.n_cells())
            .map(|c| {
                g.cell_corners(&g.cell_multi(c), &mut corners);
                corners[..nloc].iter().map(|&n| self.values[n]).sum::<f64>() * w
            })
            .collect();
        ScalarField {
            grid: g.clone(),
            location: Location::Cell,
            values,
        }
    }

    /// Multilinear interpolation of a nodal field at `p`. Periodic axes wrap;
    /// non-periodic axes clamp to the grid box.
    pub fn interpolate(&self, p: &Point) -> f64 {
        debug_assert_eq!(self.location, Location::Node);
        let (cell, xi) = locate(&self.grid, p);
        let nloc = 1usize << self.grid.dim();
        let mut s = 0.0;
        for l in 0..nloc {
            let mut w = 1.0;
            for a in 0..self.grid.dim() {
                w *= if (l >> a) & 1 == 1 {
                    xi[a]
                } else {
                    1.0 - xi[a]
                };
            }
            if w != 0.0 {
                s += w * self.values[self.grid.cell_corner(&cell, l)];
            }
        }
        s
    }

    /// Exact gradient of the multilinear interpolant at `p`.
    pub fn interpolate_gradient(&self, p: &Point) -> [f64; 3] {
        debug_assert_eq!(self.location, Location::Node);
        let g = &self.grid;
        let (cell, xi) = locate(g, p);
        let nloc = 1usize << g.dim();
        let mut out = [0.0; 3];
        for l in 0..nloc {
            let v = self.values[g.cell_corner(&cell, l)];
            for a in 0..g.dim() {
                let mut w = if (l >> a) & 1 == 1 { 1.0 } else { -1.0 } / g.h()[a];
                for c in 0..g.dim() {
                    if c != a {
                        w *= if (l >> c) & 1 == 1 {
                            xi[c]
                        } else {
                            1.0 - xi[c]
                        };
                    }
                }
                out[a] += w * v;
            }
        }
        out
    }

    /// Nodal field on `target` sampled from this field's interpolant; used to
    /// carry solutions between nested grids.
    pub fn resample(&self, target: &Grid) -> ScalarField {
        ScalarField::from_node_fn(target, |p| self.interpolate(p))
    }
}

/// Cell multi-index and reference coordinates of point `p`.
pub(crate) fn locate(g: &Grid, p: &Point) -> (Idx, [f64; 3]) {
    let mut cell = [0usize; 3];
    let mut xi = [0.0; 3];
    for a in 0..g.dim() {
        let n = g.cell_dims()[a];
        let mut r = (p[a] - g.origin(a)) / g.h()[a];
        if g.periodic(a) {
            r = r.rem_euclid(n as f64);
            // rem_euclid can round up to exactly n
            if r >= n as f64 {
                r = 0.0;
            }
        } else {
            r = r.clamp(0.0, n as f64);
        }
        let i = (r.floor() as usize).min(n - 1);
        cell[a] = i;
        xi[a] = r - i as f64;
    }
    (cell, xi)
}

/// Cell-centered vector field with `dim` components per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() * grid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "vector field needs {} values, got {}",
                grid.n_cells() * grid.dim(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.n_cells() * grid.dim()],
        }
    }

    pub fn from_cell_fn(grid: &Grid, f: impl Fn(&Point) -> [f64; 3]) -> Self {
        let d = grid.dim();
        let mut values = Vec::with_capacity(grid.n_cells() * d);
        for c in 0..grid.n_cells() {
            let v = f(&grid.cell_center(&grid.cell_multi(c)));
            values.extend_from_slice(&v[..d]);
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    #[inline]
    pub fn get(&self, cell: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.values[cell * d..(cell + 1) * d]
    }
    #[inline]
    pub fn get_mut(&mut self, cell: usize) -> &mut [f64] {
        let d = self.grid.dim();
        &mut self.values[cell * d..(cell + 1) * d]
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cell field of `|v|^2`.
    pub fn norm_sq(&self) -> ScalarField {
        let values = self
            .values
            .chunks(self.grid.dim())
            .map(|v| v.iter().map(|x| x * x).sum())
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            location: Location::Cell,
            values,
        }
    }

    pub fn component(&self, axis: usize) -> ScalarField {
        let values = self
            .values
            .chunks(self.grid.dim())
            .map(|v| v[axis])
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            location: Location::Cell,
            values,
        }
    }
}

/// Per-cell symmetric coefficient matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    grid: Grid,
    values: Vec<SymMat>,
}

impl MatrixField {
    pub fn new(grid: Grid, values: Vec<SymMat>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::ShapeMismatch(format!(
                "matrix field needs {} cells, got {}",
                grid.n_cells(),
                values.len()
            )));
        }
        if let Some(c) = values.iter().position(|m| m.dim() != grid.dim()) {
            return Err(Error::ShapeMismatch(format!(
                "matrix at cell {c} has wrong dimension"
            )));
        }
        if values.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("matrix field"));
        }
        Ok(Self { grid, values })
    }

    /// From full row-major `dim x dim` matrices; rejects asymmetric input.
    pub fn from_full(grid: Grid, full: &[Vec<f64>]) -> Result<Self> {
        let d = grid.dim();
        let mut values = Vec::with_capacity(full.len());
        for (c, m) in full.iter().enumerate() {
            let (s, asym) = SymMat::from_full(d, m);
            if asym > 1e-14 * (1.0 + s.op_norm()) {
                return Err(Error::NotSymmetric {
                    cell: c,
                    asymmetry: asym,
                });
            }
            values.push(s);
        }
        Self::new(grid, values)
    }

    pub fn constant(grid: &Grid, m: SymMat) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![m; grid.n_cells()],
        }
    }

    pub fn from_cell_fn(grid: &Grid, f: impl Fn(&Point) -> SymMat) -> Self {
        let values = (0..grid.n_cells())
            .map(|c| f(&grid.cell_center(&grid.cell_multi(c))))
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    #[inline]
    pub fn get(&self, cell: usize) -> &SymMat {
        &self.values[cell]
    }
    pub fn values(&self) -> &[SymMat] {
        &self.values
    }

    /// Checks `lower Id <= M <= upper Id` in every cell, with slack `tol`.
    pub fn check_ellipticity(&self, lower: f64, upper: f64, tol: f64) -> Result<()> {
        for (c, m) in self.values.iter().enumerate() {
            let ev = m.eigenvalues();
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            if lo < lower - tol || hi > upper + tol {
                return Err(Error::Ellipticity {
                    cell: c,
                    min: lo,
                    max: hi,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }

    /// Cell average (arithmetic mean) of the matrices.
    pub fn mean(&self) -> SymMat {
        let d = self.grid.dim();
        let sum = self
            .values
            .iter()
            .fold(SymMat::zeros(d), |acc, m| acc.add(m));
        sum.scale(1.0 / self.values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridSpec};

    #[test]
    fn interpolation_reproduces_multilinear() {
        let g = make_grid(GridSpec {
            dim: 2,
            origin: vec![0.0; 2],
            extent: vec![1.0, 2.0],
            cells: vec![4, 5],
            periodic: vec![false, false],
        })
        .unwrap();
        let u = ScalarField::from_node_fn(&g, |p| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1]);
        let p = [0.37, 1.21, 0.0];
        let exact = 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
        assert!((u.interpolate(&p) - exact).abs() < 1e-13);
        let gr = u.interpolate_gradient(&p);
        assert!((gr[0] - (2.0 + 0.5 * p[1])).abs() < 1e-12);
        assert!((gr[1] - (-1.0 + 0.5 * p[0])).abs() < 1e-12);
    }

    #[test]
    fn interpolation_wraps_periodic_axis() {
        let g = make_grid(GridSpec::unit_cell(1, 4)).unwrap();
        let u = ScalarField::new(g, Location::Node, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        // between node 3 (x=0.75) and node 0 (x=1 == 0)
        assert!((u.interpolate(&[0.875, 0.0, 0.0]) - 1.5).abs() < 1e-14);
        assert!((u.interpolate(&[1.125, 0.0, 0.0]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn from_full_rejects_asymmetric() {
        let g = make_grid(GridSpec::unit_cell(2, 2)).unwrap();
        let full = vec![vec![1.0, 0.1, 0.0, 1.0]; 4];
        assert!(matches!(
            MatrixField::from_full(g, &full),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn wrong_length_is_shape_error() {
        let g = make_grid(GridSpec::unit_cell(2, 2)).unwrap();
        assert!(ScalarField::new(g, Location::Node, vec![0.0; 3]).is_err());
    }
}
