//! Q1 Galerkin assembly of `-∇·M∇` on structured grids with cell-constant
//! coefficients, plus the load vectors used by the flux right-hand sides.

use crate::grid::{Grid, MatrixField, Q1Element, ScalarField, VectorField};
use crate::linalg::CsrMatrix;

pub(crate) const FIXED: u32 = u32::MAX;

pub struct Assembler<'a> {
    grid: &'a Grid,
    element: Q1Element,
}

impl<'a> Assembler<'a> {
    pub fn new(grid: &'a Grid) -> Self {
        Self {
            grid,
            element: Q1Element::new(grid),
        }
    }

    pub fn element(&self) -> &Q1Element {
        &self.element
    }

    /// Full stiffness row of `node`: `(column node, value)` pairs, possibly
    /// with repeated columns on coarse periodic axes.
    pub fn row_entries(&self, coeff: &MatrixField, node: usize, out: &mut Vec<(usize, f64)>) {
        let g = self.grid;
        let d = g.dim();
        let nloc = self.element.nloc();
        let idx = g.node_multi(node);
        let mut k = [0.0; 64];
        'cells: for o in 0..nloc {
            let mut cell = [0usize; 3];
            for a in 0..d {
                let off = (o >> a) & 1;
                let n = g.cell_dims()[a];
                let i = idx[a] as i64 - off as i64;
                if g.periodic(a) {
                    cell[a] = i.rem_euclid(n as i64) as usize;
                } else if i < 0 || i >= n as i64 {
                    continue 'cells;
                } else {
                    cell[a] = i as usize;
                }
            }
            let c = g.cell_index(&cell);
            self.element.stiffness(coeff.get(c), &mut k);
            for b in 0..nloc {
                out.push((g.cell_corner(&cell, b), k[o * nloc + b]));
            }
        }
    }

    /// Stiffness matrix over all nodes (singular on fully periodic grids).
    pub fn assemble_full(&self, coeff: &MatrixField) -> CsrMatrix {
        CsrMatrix::from_rows(self.grid.n_nodes(), |i, row| {
            self.row_entries(coeff, i, row)
        })
    }

    /// Stiffness restricted to the free nodes. `free_of[node]` is the free
    /// index or [`FIXED`]; `fixed_values[node]` carries the Dirichlet value of
    /// fixed nodes. Returns the matrix and the lifted load `-K_fD g_D`.
    pub fn assemble_reduced(
        &self,
        coeff: &MatrixField,
        free_nodes: &[usize],
        free_of: &[u32],
        fixed_values: &[f64],
    ) -> (CsrMatrix, Vec<f64>) {
        let mut lift = vec![0.0; free_nodes.len()];
        let mut buf = Vec::with_capacity(32);
        let m = CsrMatrix::from_rows(free_nodes.len(), |i, row| {
            buf.clear();
            self.row_entries(coeff, free_nodes[i], &mut buf);
            for &(col, v) in &buf {
                let f = free_of[col];
                if f == FIXED {
                    lift[i] -= v * fixed_values[col];
                } else {
                    row.push((f as usize, v));
                }
            }
        });
        (m, lift)
    }

    /// Nodal load `b_n = -∫ F·∇N_n` for a cell-constant flux `F`.
    pub fn flux_load(&self, flux: &VectorField) -> Vec<f64> {
        let g = self.grid;
        let d = g.dim();
        let nloc = self.element.nloc();
        let vol = g.cell_volume();
        let mut b = vec![0.0; g.n_nodes()];
        let mut corners = [0usize; 8];
        for c in 0..g.n_cells() {
            g.cell_corners(&g.cell_multi(c), &mut corners);
            let f = flux.get(c);
            for l in 0..nloc {
                let mut s = 0.0;
                for a in 0..d {
                    s += f[a] * self.element.center_grad(l, a);
                }
                b[corners[l]] -= vol * s;
            }
        }
        b
    }

    /// Nodal load `b_n = -∫ M∇w·∇N_n` with exact element integration.
    pub fn potential_load(&self, coeff: &MatrixField, w: &ScalarField) -> Vec<f64> {
        let g = self.grid;
        let nloc = self.element.nloc();
        let wv = w.values();
        let mut b = vec![0.0; g.n_nodes()];
        let mut corners = [0usize; 8];
        let mut k = [0.0; 64];
        for c in 0..g.n_cells() {
            g.cell_corners(&g.cell_multi(c), &mut corners);
            self.element.stiffness(coeff.get(c), &mut k);
            for a in 0..nloc {
                let mut s = 0.0;
                for bl in 0..nloc {
                    s += k[a * nloc + bl] * wv[corners[bl]];
                }
                b[corners[a]] -= s;
            }
        }
        b
    }

    /// `∫ M∇u·∇u` with exact element integration.
    pub fn energy(&self, coeff: &MatrixField, u: &ScalarField) -> f64 {
        let g = self.grid;
        let nloc = self.element.nloc();
        let uv = u.values();
        let mut corners = [0usize; 8];
        let mut k = [0.0; 64];
        let mut total = 0.0;
        for c in 0..g.n_cells() {
            g.cell_corners(&g.cell_multi(c), &mut corners);
            self.element.stiffness(coeff.get(c), &mut k);
            let mut e = 0.0;
            for a in 0..nloc {
                let mut s = 0.0;
                for bl in 0..nloc {
                    s += k[a * nloc + bl] * uv[corners[bl]];
                }
                e += s * uv[corners[a]];
            }
            total += e;
        }
        total
    }
}
