//! Named families of bottom data `f`, normalized to `‖f‖_∞ = 1`.

use std::f64::consts::PI;

use homcarl_core::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BoundaryFamily {
    /// `cos(2π m x_0 / L)`.
    Cosine {
        #[serde(default = "one")]
        frequency: u32,
    },
    /// `tanh(sin(2π x_0 / L) / width)`.
    StepSmoothed { width: f64 },
    /// `Σ_{l=0}^{levels} cos(2π 2^l x_0 / L)` with equal amplitudes.
    Lacunary { levels: u32 },
    /// `Σ c_m cos(2π m·x / L + θ_m)` with `|m|_∞ ≤ modes`, `c_m` uniform in
    /// `[-1, 1]` divided by `|m|`.
    RandomTrig {
        modes: u32,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy)]
struct Mode {
    freq: [f64; 2],
    amp: f64,
    phase: f64,
}

/// Normalized bottom data, cheap to clone into solver closures.
#[derive(Debug, Clone)]
pub struct BoundaryProfile {
    n: usize,
    x_extent: f64,
    modes: Vec<Mode>,
    /// `Some(width)` for the smoothed step.
    step: Option<f64>,
    scale: f64,
}

impl BoundaryProfile {
    pub fn new(family: &BoundaryFamily, n: usize, x_extent: f64, seed: u64) -> CliResult<Self> {
        let mut p = Self {
            n,
            x_extent,
            modes: Vec::new(),
            step: None,
            scale: 1.0,
        };
        let axis0 = |m: f64, amp: f64| Mode {
            freq: [m, 0.0],
            amp,
            phase: 0.0,
        };
        match family {
            BoundaryFamily::Cosine { frequency } => {
                if *frequency == 0 {
                    return Err(CliError::Config("cosine frequency must be positive".into()));
                }
                p.modes.push(axis0(*frequency as f64, 1.0));
            }
            BoundaryFamily::StepSmoothed { width } => {
                if !(*width > 0.0) {
                    return Err(CliError::Config("step width must be positive".into()));
                }
                p.step = Some(*width);
            }
            BoundaryFamily::Lacunary { levels } => {
                p.modes = (0..=*levels)
                    .map(|l| axis0((1u64 << l) as f64, 1.0))
                    .collect();
            }
            BoundaryFamily::RandomTrig { modes, seed: s } => {
                if *modes == 0 {
                    return Err(CliError::Config(
                        "random trigonometric data needs at least one mode".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(s.unwrap_or(seed));
                let m = *modes as i64;
                let range: Vec<i64> = if n == 1 { vec![0] } else { (-m..=m).collect() };
                for m1 in range {
                    for m0 in 0..=m {
                        if (m0, m1) == (0, 0) || (m0 == 0 && m1 < 0) {
                            continue;
                        }
                        let norm = (m0.abs().max(m1.abs())) as f64;
                        p.modes.push(Mode {
                            freq: [m0 as f64, m1 as f64],
                            amp: rng.gen_range(-1.0..=1.0) / norm,
                            phase: rng.gen_range(0.0..2.0 * PI),
                        });
                    }
                }
            }
        }
        p.scale = 1.0 / p.raw_sup();
        Ok(p)
    }

    fn raw(&self, p: &Point) -> f64 {
        let w = 2.0 * PI / self.x_extent;
        if let Some(width) = self.step {
            return ((w * p[0]).sin() / width).tanh();
        }
        self.modes
            .iter()
            .map(|m| {
                let arg = w * (m.freq[0] * p[0] + if self.n > 1 { m.freq[1] * p[1] } else { 0.0 });
                m.amp * (arg + m.phase).cos()
            })
            .sum()
    }

    /// `max |f|` on a dense sample of one period (exact for the cosine and
    /// lacunary families, whose maximum sits at the origin).
    fn raw_sup(&self) -> f64 {
        let per_axis = if self.n == 1 { 8192 } else { 512 };
        let total = per_axis * if self.n == 1 { 1 } else { per_axis };
        let mut sup = 0.0f64;
        for s in 0..total {
            let mut p = [0.0; 3];
            p[0] = (s % per_axis) as f64 / per_axis as f64 * self.x_extent;
            if self.n > 1 {
                p[1] = (s / per_axis) as f64 / per_axis as f64 * self.x_extent;
            }
            sup = sup.max(self.raw(&p).abs());
        }
        sup
    }

    pub fn eval(&self, p: &Point) -> f64 {
        self.scale * self.raw(p)
    }
}
