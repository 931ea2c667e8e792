//! Closed-form solutions of `(a(x/ε) u')' = f'` on `(0,1)` with
//! `u(0) = u(1) = 0`:
//!
//! `u_ε(x) = ∫₀ˣ f/a - (∫₀ˣ 1/a) (∫₀¹ 1/a)^{-1} ∫₀¹ f/a`,
//! `ū(x) = (∫₀ˣ f - x ∫₀¹ f) / ā` with `ā = (∫₀¹ 1/a)^{-1}`.
//!
//! `a` is piecewise constant on `m` equal subintervals of the period and `f`
//! is piecewise linear, so every integral is evaluated exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile1D {
    /// Values of `a` on `m` equal subintervals of `[0, 1)`.
    pub a: Vec<f64>,
    /// Nodes `(x, f(x))` of the piecewise-linear `f`, `x` increasing from 0 to 1.
    pub f: Vec<(f64, f64)>,
}

impl Profile1D {
    pub fn new(a: Vec<f64>, f: Vec<(f64, f64)>) -> Result<Self> {
        let p = Self { a, f };
        p.validate()?;
        Ok(p)
    }

    /// `f(y) = y`.
    pub fn linear_forcing(a: Vec<f64>) -> Result<Self> {
        Self::new(a, vec![(0.0, 0.0), (1.0, 1.0)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidProfile(
                "coefficient values must be positive".into(),
            ));
        }
        if self.f.len() < 2 || self.f[0].0 != 0.0 || self.f[self.f.len() - 1].0 != 1.0 {
            return Err(Error::InvalidProfile(
                "forcing nodes must start at 0 and end at 1".into(),
            ));
        }
        if self.f.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidProfile("forcing nodes must increase".into()));
        }
        if self.f.iter().any(|&(_, v)| !v.is_finite()) {
            return Err(Error::InvalidProfile(
                "forcing values must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Coefficient on the unit period at `y`.
    pub fn a_at(&self, y: f64) -> f64 {
        let m = self.a.len();
        let w = y.rem_euclid(1.0);
        self.a[((w * m as f64).floor() as usize).min(m - 1)]
    }

    pub fn f_at(&self, x: f64) -> f64 {
        let i = self
            .f
            .partition_point(|&(xi, _)| xi <= x)
            .clamp(1, self.f.len() - 1);
        let (x0, f0) = self.f[i - 1];
        let (x1, f1) = self.f[i];
        f0 + (f1 - f0) * (x - x0) / (x1 - x0)
    }

    /// Harmonic mean `ā = (∫₀¹ 1/a)^{-1}`.
    pub fn abar(&self) -> f64 {
        self.a.len() as f64 / self.a.iter().map(|v| 1.0 / v).sum::<f64>()
    }

    pub fn arithmetic_mean(&self) -> f64 {
        self.a.iter().sum::<f64>() / self.a.len() as f64
    }
}

fn periods(eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidProfile(format!("ε = {eps} outside (0, 1]")));
    }
    let n = (1.0 / eps).round();
    if (1.0 / eps - n).abs() > 1e-9 * n {
        return Err(Error::InvalidProfile(format!(
            "ε = {eps} is not the reciprocal of an integer"
        )));
    }
    Ok(n as usize)
}

/// Exact `u_ε` for one profile and `ε`, with prefix integrals cached on the
/// common refinement of the breakpoints of `a(·/ε)` and `f`.
#[derive(Debug, Clone)]
pub struct Oracle {
    profile: Profile1D,
    eps: f64,
    /// Breakpoints `0 = x_0 < ... < x_M = 1`.
    xs: Vec<f64>,
    inv_a: Vec<f64>,
    /// `∫₀^{x_i} 1/a` and `∫₀^{x_i} f/a`.
    i_inv: Vec<f64>,
    i_f: Vec<f64>,
    /// `(∫₀¹ 1/a)^{-1} ∫₀¹ f/a`.
    flux: f64,
}

impl Oracle {
    pub fn new(profile: &Profile1D, eps: f64) -> Result<Self> {
        profile.validate()?;
        let n = periods(eps)?;
        let cells = n * profile.a.len();
        let mut xs: Vec<f64> = (0..=cells).map(|k| k as f64 / cells as f64).collect();
        xs.extend(profile.f.iter().map(|&(x, _)| x));
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|b, a| (*b - *a).abs() <= 1e-15);
        let mut inv_a = Vec::with_capacity(xs.len() - 1);
        let mut i_inv = vec![0.0];
        let mut i_f = vec![0.0];
        for w in xs.windows(2) {
            let ia = 1.0 / profile.a_at(0.5 * (w[0] + w[1]) / eps);
            let len = w[1] - w[0];
            inv_a.push(ia);
            i_inv.push(i_inv.last().unwrap() + ia * len);
            i_f.push(
                i_f.last().unwrap() + ia * len * 0.5 * (profile.f_at(w[0]) + profile.f_at(w[1])),
            );
        }
        let flux = i_f.last().unwrap() / i_inv.last().unwrap();
        Ok(Self {
            profile: profile.clone(),
            eps,
            xs,
            inv_a,
            i_inv,
            i_f,
            flux,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    /// `(∫₀ˣ 1/a, ∫₀ˣ f/a)`.
    fn prefix(&self, x: f64) -> (f64, f64) {
        let x = x.clamp(0.0, 1.0);
        let i = self
            .xs
            .partition_point(|&b| b <= x)
            .clamp(1, self.xs.len() - 1)
            - 1;
        let len = x - self.xs[i];
        let ia = self.inv_a[i];
        let fl = self.profile.f_at(self.xs[i]);
        let fx = self.profile.f_at(x);
        (
            self.i_inv[i] + ia * len,
            self.i_f[i] + ia * len * 0.5 * (fl + fx),
        )
    }

    pub fn u(&self, x: f64) -> f64 {
        let (inv, f) = self.prefix(x);
        f - inv * self.flux
    }
}

/// `u_ε(x)`.
pub fn exact_u_eps(profile: &Profile1D, eps: f64, x: f64) -> Result<f64> {
    Ok(Oracle::new(profile, eps)?.u(x))
}

fn integral_f(profile: &Profile1D, x: f64) -> f64 {
    let mut s = 0.0;
    for w in profile.f.windows(2) {
        let (x0, f0) = w[0];
        if x <= x0 {
            break;
        }
        let x1 = w[1].0.min(x);
        s += 0.5 * (f0 + profile.f_at(x1)) * (x1 - x0);
    }
    s
}

/// `ū(x)`.
pub fn exact_ubar(profile: &Profile1D, x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    (integral_f(profile, x) - x * integral_f(profile, 1.0)) / profile.abar()
}

/// `||u_ε - ū||_{L²(0,1)}` by 3-point Gauss on each interval of the common
/// refinement, exact for the piecewise quadratics involved.
pub fn l2_error(profile: &Profile1D, eps: f64) -> Result<f64> {
    let oracle = Oracle::new(profile, eps)?;
    const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let mut s = 0.0;
    for w in oracle.breakpoints().windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (xi, wi) in NODES.iter().zip(WEIGHTS) {
            let x = mid + half * xi;
            s += wi * half * (oracle.u(x) - exact_ubar(profile, x)).powi(2);
        }
    }
    Ok(s.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub eps: f64,
    pub error: f64,
    /// Slope against the previous row in log-log coordinates.
    pub local_slope: Option<f64>,
}

pub fn l2_error_curve(profile: &Profile1D, eps_list: &[f64]) -> Result<Vec<ErrorRow>> {
    let mut rows: Vec<ErrorRow> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let error = l2_error(profile, eps)?;
        let local_slope = rows.last().and_then(|p| {
            (p.error > 0.0 && error > 0.0).then(|| (error / p.error).ln() / (eps / p.eps).ln())
        });
        rows.push(ErrorRow {
            eps,
            error,
            local_slope,
        });
    }
    Ok(rows)
}
