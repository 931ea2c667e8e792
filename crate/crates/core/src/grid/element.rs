use super::{Grid, SymMat};

/// Multilinear (Q1) element on one grid cell with exact integrals of
/// products of shape-function derivatives.
///
/// Local node `b` sits at the corner whose bit `a` selects the upper end of
/// axis `a`.
#[derive(Debug, Clone)]
pub struct Q1Element {
    dim: usize,
    nloc: usize,
    h: [f64; 3],
    /// `pair[p * dim + q][a * nloc + b] = ∫_cell ∂_p N_a ∂_q N_b`
    pair: Vec<Vec<f64>>,
}

#[inline]
fn sign(local: usize, axis: usize) -> f64 {
    if (local >> axis) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

impl Q1Element {
    pub fn new(grid: &Grid) -> Self {
        let dim = grid.dim();
        let nloc = 1 << dim;
        let h = *grid.h();
        let mut pair = vec![vec![0.0; nloc * nloc]; dim * dim];
        for p in 0..dim {
            for q in 0..dim {
                let g = &mut pair[p * dim + q];
                for a in 0..nloc {
                    for b in 0..nloc {
                        let mut v = 1.0;
                        for c in 0..dim {
                            let same = ((a >> c) & 1) == ((b >> c) & 1);
                            let f = match (c == p, c == q) {
                                (true, true) => sign(a, c) * sign(b, c) / h[c],
                                (true, false) => 0.5 * sign(a, c),
                                (false, true) => 0.5 * sign(b, c),
                                (false, false) => h[c] * if same { 1.0 / 3.0 } else { 1.0 / 6.0 },
                            };
                            v *= f;
                        }
                        g[a * nloc + b] = v;
                    }
                }
            }
        }
        Self { dim, nloc, h, pair }
    }

    #[inline]
    pub fn nloc(&self) -> usize {
        self.nloc
    }

    /// Element stiffness `∫ M ∇N_b · ∇N_a` for a cell-constant coefficient,
    /// written row-major into the first `nloc * nloc` entries of `out`.
    pub fn stiffness(&self, m: &SymMat, out: &mut [f64; 64]) {
        let n2 = self.nloc * self.nloc;
        out[..n2].iter_mut().for_each(|v| *v = 0.0);
        for p in 0..self.dim {
            for q in 0..self.dim {
                let c = m.get(p, q);
                if c == 0.0 {
                    continue;
                }
                let g = &self.pair[p * self.dim + q];
                for k in 0..n2 {
                    out[k] += c * g[k];
                }
            }
        }
    }

    /// `∂_axis N_local` at reference coordinates `xi ∈ [0,1]^dim`.
    #[inline]
    pub fn shape_grad(&self, local: usize, axis: usize, xi: &[f64; 3]) -> f64 {
        let mut v = sign(local, axis) / self.h[axis];
        for c in 0..self.dim {
            if c != axis {
                v *= if (local >> c) & 1 == 1 {
                    xi[c]
                } else {
                    1.0 - xi[c]
                };
            }
        }
        v
    }

    #[inline]
    pub fn shape_value(&self, local: usize, xi: &[f64; 3]) -> f64 {
        let mut v = 1.0;
        for c in 0..self.dim {
            v *= if (local >> c) & 1 == 1 {
                xi[c]
            } else {
                1.0 - xi[c]
            };
        }
        v
    }

    /// `∂_axis N_local` at the cell center; also equals the cell average of
    /// that derivative.
    #[inline]
    pub fn center_grad(&self, local: usize, axis: usize) -> f64 {
        sign(local, axis) / self.h[axis] * 0.5f64.powi(self.dim as i32 - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridSpec};
    use approx::assert_relative_eq;

    #[test]
    fn laplace_element_matches_textbook() {
        let g = make_grid(GridSpec {
            dim: 2,
            origin: vec![0.0; 2],
            extent: vec![2.0, 2.0],
            cells: vec![2, 2],
            periodic: vec![false, false],
        })
        .unwrap();
        let e = Q1Element::new(&g);
        let mut k = [0.0; 64];
        e.stiffness(&SymMat::identity(2), &mut k);
        // square bilinear element: diagonal 2/3, edge -1/6, opposite -1/3
        assert_relative_eq!(k[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(k[1], -1.0 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(k[3], -1.0 / 3.0, epsilon = 1e-14);
        for a in 0..4 {
            let row: f64 = (0..4).map(|b| k[a * 4 + b]).sum();
            assert!(row.abs() < 1e-14);
        }
    }
}
