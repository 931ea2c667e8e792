//! Small symmetric matrices (dimension at most 3) in packed storage.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Symmetric `dim x dim` matrix, `dim <= 3`, stored as the upper triangle
/// in the order `00, 01, 02, 11, 12, 22`. Entries outside `dim` are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    dim: usize,
    packed: [f64; 6],
}

#[inline]
fn slot(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match (i, j) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        (2, 2) => 5,
        _ => unreachable!("index out of range for a 3x3 matrix"),
    }
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=3).contains(&dim), "SymMat supports dimensions 1..=3");
        Self {
            dim,
            packed: [0.0; 6],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, value);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds from a full row-major matrix, returning the largest
    /// `|m_ij - m_ji|` alongside the symmetrized result.
    pub fn from_full(dim: usize, full: &[f64]) -> (Self, f64) {
        assert_eq!(full.len(), dim * dim);
        let mut m = Self::zeros(dim);
        let mut asym = 0.0f64;
        for i in 0..dim {
            for j in i..dim {
                let a = full[i * dim + j];
                let b = full[j * dim + i];
                asym = asym.max((a - b).abs());
                m.set(i, j, 0.5 * (a + b));
            }
        }
        (m, asym)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[slot(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.packed[slot(i, j)] = v;
    }

    pub fn packed(&self) -> &[f64; 6] {
        &self.packed
    }

    /// `M v` for `v` of length `dim` (extra entries ignored).
    #[inline]
    pub fn mul_vec(&self, v: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..self.dim {
            let mut s = 0.0;
            for j in 0..self.dim {
                s += self.get(i, j) * v[j];
            }
            out[i] = s;
        }
        out
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mv = self.mul_vec(v);
        (0..self.dim).map(|i| mv[i] * v[i]).sum()
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for (a, b) in out.packed.iter_mut().zip(other.packed.iter()) {
            *a -= b;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = *self;
        for (a, b) in out.packed.iter_mut().zip(other.packed.iter()) {
            *a += b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for a in out.packed.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.packed.iter().all(|v| v.is_finite())
    }

    /// Eigenvalues in ascending order (length `dim`).
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![self.packed[0]],
            2 => {
                let (a, b, d) = (self.get(0, 0), self.get(0, 1), self.get(1, 1));
                let mean = 0.5 * (a + d);
                let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
                vec![mean - rad, mean + rad]
            }
            _ => {
                let m = Matrix3::from_fn(|i, j| self.get(i, j));
                let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
                ev.sort_by(|x, y| x.total_cmp(y));
                ev
            }
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().unwrap()
    }

    /// Spectral norm; equals the largest absolute eigenvalue for symmetric matrices.
    pub fn op_norm(&self) -> f64 {
        let ev = self.eigenvalues();
        ev[0].abs().max(ev[ev.len() - 1].abs())
    }

    /// Row-major `dim x dim` entries.
    pub fn to_full(&self) -> Vec<f64> {
        let n = self.dim;
        (0..n * n).map(|e| self.get(e / n, e % n)).collect()
    }

    pub fn inverse(&self) -> Option<Self> {
        let n = self.dim;
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.get(i, j));
        let inv = m.try_inverse()?;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                out.set(i, j, 0.5 * (inv[(i, j)] + inv[(j, i)]));
            }
        }
        Some(out)
    }
}
