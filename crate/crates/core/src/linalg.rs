//! Sparse storage and the Jacobi-preconditioned conjugate gradient solver
//! shared by the cell problems and the strip solves.
//!
//! All reductions run in a fixed order, so results are bit-identical across
//! runs and thread counts.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix row by row. `row(i, buf)` pushes `(col, value)`
    /// pairs for row `i`; duplicate columns are summed.
    pub fn from_rows(n: usize, mut row: impl FnMut(usize, &mut Vec<(usize, f64)>)) -> Self {
        assert!(
            n <= u32::MAX as usize,
            "matrix too large for 32-bit column indices"
        );
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut buf: Vec<(usize, f64)> = Vec::with_capacity(32);
        row_ptr.push(0);
        for i in 0..n {
            buf.clear();
            row(i, &mut buf);
            buf.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            while k < buf.len() {
                let c = buf[k].0;
                let mut v = buf[k].1;
                k += 1;
                while k < buf.len() && buf[k].0 == c {
                    v += buf[k].1;
                    k += 1;
                }
                cols.push(c as u32);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b]
            .iter()
            .zip(&self.vals[a..b])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_dot(x, y);
    }

    /// `y = A x`, returning `x·y` summed chunk by chunk in a fixed order.
    pub fn matvec_dot(&self, x: &[f64], y: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        const CHUNK: usize = 1 << 14;
        let partial: Vec<f64> = y
            .par_chunks_mut(CHUNK)
            .enumerate()
            .map(|(ci, ys)| {
                let base = ci * CHUNK;
                let mut acc = 0.0;
                for (k, yi) in ys.iter_mut().enumerate() {
                    let i = base + k;
                    let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
                    let mut s = 0.0;
                    for (&c, &v) in self.cols[a..b].iter().zip(&self.vals[a..b]) {
                        s += v * x[c as usize];
                    }
                    *yi = s;
                    acc += s * x[i];
                }
                acc
            })
            .collect();
        partial.iter().sum()
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m = m.max((v - self.get(j, i)).abs());
            }
        }
        m
    }
}

/// Fixed-order dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Relative residual target `||b - A x|| / ||b||`.
    pub tol: f64,
    pub max_iter: usize,
    /// Restrict iterates to zero (Euclidean) mean; for singular periodic
    /// operators whose kernel is the constants.
    pub zero_mean: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            zero_mean: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD (or, with `zero_mean`,
/// symmetric positive semidefinite with constant kernel) systems.
pub fn cg(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: &CgOptions) -> Result<CgOutcome> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "rhs length {} vs matrix size {n}",
            b.len()
        )));
    }
    let mut rhs = b.to_vec();
    if opts.zero_mean {
        remove_mean(&mut rhs);
    }
    let bnorm = norm2(&rhs);
    if !bnorm.is_finite() {
        return Err(Error::NonFinite("cg right-hand side"));
    }
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if opts.zero_mean {
        remove_mean(&mut x);
    }
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut total_it = 0;
    let mut res;
    // restart from the current iterate if the recursively updated residual
    // drifted below tolerance while the true one did not
    loop {
        let before = total_it;
        res = cg_sweep(a, &rhs, &inv_diag, &mut x, bnorm, opts, &mut total_it)?;
        if res <= opts.tol || total_it >= opts.max_iter || total_it == before {
            break;
        }
    }
    if res > opts.tol {
        log::warn!("cg stopped after {total_it} iterations at relative residual {res:e}");
        return Err(Error::NotConverged {
            iterations: total_it,
            residual: res,
        });
    }
    Ok(CgOutcome {
        x,
        iterations: total_it,
        residual: res,
    })
}

/// One CG run from `x`; returns the true relative residual on exit.
fn cg_sweep(
    a: &CsrMatrix,
    rhs: &[f64],
    inv_diag: &[f64],
    x: &mut [f64],
    bnorm: f64,
    opts: &CgOptions,
    it: &mut usize,
) -> Result<f64> {
    let n = a.n();
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, di)| ri * di).collect();
    if opts.zero_mean {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = norm2(&r) / bnorm;
    while res > opts.tol && *it < opts.max_iter {
        let pq = a.matvec_dot(&p, &mut q);
        if pq.is_nan() {
            return Err(Error::NonFinite("cg iteration"));
        }
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        let (mut rr, mut rz_new) = (0.0, 0.0);
        for i in 0..n {
            x[i] += alpha * p[i];
            let ri = r[i] - alpha * q[i];
            r[i] = ri;
            rr += ri * ri;
            let zi = ri * inv_diag[i];
            z[i] = zi;
            rz_new += ri * zi;
        }
        if opts.zero_mean {
            remove_mean(&mut z);
            rz_new = dot(&r, &z);
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = rr.sqrt() / bnorm;
        *it += 1;
        if !res.is_finite() {
            return Err(Error::NonFinite("cg residual"));
        }
    }
    if opts.zero_mean {
        remove_mean(x);
    }
    a.matvec(x, &mut q);
    let mut rr = 0.0;
    for i in 0..n {
        let d = rhs[i] - q[i];
        rr += d * d;
    }
    Ok(rr.sqrt() / bnorm)
}
