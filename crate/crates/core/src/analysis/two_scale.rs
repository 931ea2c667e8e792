use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{CorrectorLibrary, WhitneyLayout};
use crate::grid::{gradient, Grid, Location, ScalarField, VectorField};

/// Gradient at every node: the average of the Q1 gradients of the adjacent
/// cells.
pub fn nodal_gradient(u: &ScalarField) -> Result<Vec<[f64; 3]>> {
    let grad = gradient(u)?;
    Ok(average_to_nodes(u.grid(), &grad))
}

pub(crate) fn average_to_nodes(g: &Grid, grad: &VectorField) -> Vec<[f64; 3]> {
    let d = g.dim();
    (0..g.n_nodes())
        .into_par_iter()
        .map(|node| {
            let idx = g.node_multi(node);
            let mut acc = [0.0; 3];
            let mut count = 0usize;
            'cells: for o in 0..(1usize << d) {
                let mut cell = [0usize; 3];
                for a in 0..d {
                    let n = g.cell_dims()[a] as i64;
                    let i = idx[a] as i64 - ((o >> a) & 1) as i64;
                    if g.periodic(a) {
                        cell[a] = i.rem_euclid(n) as usize;
                    } else if i < 0 || i >= n {
                        continue 'cells;
                    } else {
                        cell[a] = i as usize;
                    }
                }
                let v = grad.get(g.cell_index(&cell));
                for a in 0..d {
                    acc[a] += v[a];
                }
                count += 1;
            }
            for v in acc.iter_mut().take(d) {
                *v /= count as f64;
            }
            acc
        })
        .collect()
}

/// Localized two-scale expansion
/// `u2s = ū + Σ_kj 2^k ε χ_kj φ^i_kj(x / (2^k ε)) ∂_i ū`.
pub fn two_scale_expand(
    ubar: &ScalarField,
    layout: &WhitneyLayout,
    lib: &CorrectorLibrary,
) -> Result<ScalarField> {
    if ubar.location() != Location::Node {
        return Err(Error::ShapeMismatch(
            "two-scale expansion needs a nodal field".into(),
        ));
    }
    let g = ubar.grid();
    let d = g.dim();
    if d != layout.dim() {
        return Err(Error::ShapeMismatch(
            "layout and grid dimensions differ".into(),
        ));
    }
    for b in &layout.boxes {
        if !lib.contains_key(&b.template) {
            return Err(Error::MissingTemplate(b.template.clone()));
        }
    }
    let grad = nodal_gradient(ubar)?;
    let values: Vec<f64> = (0..g.n_nodes())
        .into_par_iter()
        .map(|node| {
            let p = g.node_coords(&g.node_multi(node));
            let base = ubar.values()[node];
            let Some(bi) = layout.locate(&p) else {
                return base;
            };
            let b = &layout.boxes[bi];
            let chi = b.chi(&p, layout.x_extent);
            if chi == 0.0 {
                return base;
            }
            let set = &lib[&b.template];
            let scale = b.period();
            let mut y = [0.0; 3];
            for a in 0..d {
                y[a] = p[a] / scale;
            }
            let corr: f64 = (0..d).map(|i| set.phi_at(i, &y) * grad[node][i]).sum();
            base + scale * chi * corr
        })
        .collect();
    ScalarField::new(g.clone(), Location::Node, values)
}
