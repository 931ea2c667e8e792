use super::{Grid, Location, Point, Q1Element, ScalarField, VectorField};
use crate::error::{Error, Result};

/// Axis-aligned box `[lo, hi)` in grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBox {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
}

impl AxisBox {
    pub fn new(lo: &[f64], hi: &[f64]) -> Self {
        assert_eq!(lo.len(), hi.len());
        let mut b = AxisBox {
            dim: lo.len(),
            lo: [0.0; 3],
            hi: [0.0; 3],
        };
        b.lo[..lo.len()].copy_from_slice(lo);
        b.hi[..hi.len()].copy_from_slice(hi);
        b
    }

    pub fn of_grid(grid: &Grid) -> Self {
        let d = grid.dim();
        let lo: Vec<f64> = (0..d).map(|a| grid.origin(a)).collect();
        let hi: Vec<f64> = (0..d).map(|a| grid.origin(a) + grid.extent(a)).collect();
        Self::new(&lo, &hi)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim)
            .map(|a| (self.hi[a] - self.lo[a]).max(0.0))
            .product()
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|a| p[a] >= self.lo[a] && p[a] < self.hi[a])
    }
}

/// Cells along `axis` overlapping `[lo, hi)`, with overlap lengths. On a
/// periodic axis the interval wraps; overlaps from several windings add up.
pub fn cell_overlaps(grid: &Grid, axis: usize, lo: f64, hi: f64) -> Result<Vec<(usize, f64)>> {
    let h = grid.h()[axis];
    let n = grid.cell_dims()[axis];
    let o = grid.origin(axis);
    let len = grid.extent(axis);
    if hi <= lo {
        return Ok(Vec::new());
    }
    let slack = 1e-9 * h;
    let (a, b) = if grid.periodic(axis) {
        (lo - o, hi - o)
    } else {
        if lo < o - slack || hi > o + len + slack {
            return Err(Error::RegionOutsideGrid(format!(
                "[{lo}, {hi}) along axis {axis} vs grid [{o}, {})",
                o + len
            )));
        }
        ((lo - o).max(0.0), (hi - o).min(len))
    };
    let first = (a / h).floor() as i64;
    let last = ((b / h).ceil() as i64).max(first + 1);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity((last - first) as usize);
    for i in first..last {
        let c_lo = i as f64 * h;
        let w = (b.min(c_lo + h) - a.max(c_lo)).max(0.0);
        if w <= 0.0 {
            continue;
        }
        let ci = i.rem_euclid(n as i64) as usize;
        if let Some(e) = out.iter_mut().find(|(c, _)| *c == ci) {
            e.1 += w;
        } else {
            out.push((ci, w));
        }
    }
    Ok(out)
}

/// Midpoint-rule integral over `region` of a per-cell integrand, weighting
/// each cell by its overlap volume with the region.
pub fn integrate_cells(grid: &Grid, region: &AxisBox, f: impl Fn(usize) -> f64) -> Result<f64> {
    let d = grid.dim();
    if region.dim != d {
        return Err(Error::ShapeMismatch(
            "region dimension differs from grid".into(),
        ));
    }
    let mut ov: Vec<Vec<(usize, f64)>> = Vec::with_capacity(3);
    for a in 0..d {
        ov.push(cell_overlaps(grid, a, region.lo[a], region.hi[a])?);
    }
    while ov.len() < 3 {
        ov.push(vec![(0, 1.0)]);
    }
    let cd = grid.cell_dims();
    let mut total = 0.0;
    for &(i2, w2) in &ov[2] {
        for &(i1, w1) in &ov[1] {
            let base = cd[0] * (i1 + cd[1] * i2);
            let w12 = w1 * w2;
            let mut row = 0.0;
            for &(i0, w0) in &ov[0] {
                row += w0 * f(base + i0);
            }
            total += w12 * row;
        }
    }
    Ok(total)
}

/// Midpoint-rule integral of a cell field over an axis-aligned box.
pub fn integrate(g: &ScalarField, region: &AxisBox) -> Result<f64> {
    if g.location() != Location::Cell {
        return Err(Error::ShapeMismatch(
            "integrate expects a cell field".into(),
        ));
    }
    let v = g.values();
    integrate_cells(g.grid(), region, |c| v[c])
}

/// Cell-centered gradient of a nodal field from the Q1 shape functions.
pub fn gradient(u: &ScalarField) -> Result<VectorField> {
    if u.location() != Location::Node {
        return Err(Error::ShapeMismatch(
            "gradient expects a nodal field".into(),
        ));
    }
    let g = u.grid();
    let d = g.dim();
    let el = Q1Element::new(g);
    let nloc = el.nloc();
    let vals = u.values();
    let mut out = vec![0.0; g.n_cells() * d];
    let mut corners = [0usize; 8];
    for c in 0..g.n_cells() {
        g.cell_corners(&g.cell_multi(c), &mut corners);
        for a in 0..d {
            let mut s = 0.0;
            for l in 0..nloc {
                s += el.center_grad(l, a) * vals[corners[l]];
            }
            out[c * d + a] = s;
        }
    }
    VectorField::new(g.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(cells: usize, periodic: bool) -> Grid {
        make_grid(GridSpec {
            dim: 2,
            origin: vec![0.0; 2],
            extent: vec![1.0; 2],
            cells: vec![cells; 2],
            periodic: vec![periodic; 2],
        })
        .unwrap()
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = unit(5, false);
        let u = ScalarField::from_node_fn(&g, |_| 4.2);
        assert!(gradient(&u)
            .unwrap()
            .values()
            .iter()
            .all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_exact_on_affine() {
        let g = make_grid(GridSpec {
            dim: 2,
            origin: vec![-0.3, 0.1],
            extent: vec![1.7, 0.9],
            cells: vec![7, 5],
            periodic: vec![false, false],
        })
        .unwrap();
        let u = ScalarField::from_node_fn(&g, |p| 3.0 * p[0] + 2.0 * p[1] - 1.0);
        let gr = gradient(&u).unwrap();
        for c in 0..g.n_cells() {
            assert!((gr.get(c)[0] - 3.0).abs() < 1e-12);
            assert!((gr.get(c)[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_bilinear_at_center() {
        let g = make_grid(GridSpec {
            dim: 2,
            origin: vec![0.0; 2],
            extent: vec![1.0; 2],
            cells: vec![2, 2],
            periodic: vec![false; 2],
        })
        .unwrap();
        // one cell would violate the cells >= 2 invariant; use the 2x2 grid
        // and look at the cell [0.5,1]^2 whose center is (0.75, 0.75)
        let u = ScalarField::from_node_fn(&g, |p| p[0] * p[1]);
        let gr = gradient(&u).unwrap();
        let c = g.cell_index(&[1, 1, 0]);
        assert_relative_eq!(gr.get(c)[0], 0.75, epsilon = 1e-14);
        assert_relative_eq!(gr.get(c)[1], 0.75, epsilon = 1e-14);
        let c = g.cell_index(&[0, 0, 0]);
        assert_relative_eq!(gr.get(c)[0], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn integrate_constants_and_affine() {
        let g = unit(8, false);
        let one = ScalarField::from_cell_fn(&g, |_| 1.0);
        assert_relative_eq!(
            integrate(&one, &AxisBox::of_grid(&g)).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        let two = ScalarField::from_cell_fn(&g, |_| 2.0);
        let half = AxisBox::new(&[0.0, 0.0], &[0.5, 1.0]);
        assert_relative_eq!(integrate(&two, &half).unwrap(), 1.0, epsilon = 1e-14);
        let t = ScalarField::from_cell_fn(&g, |p| p[1]);
        assert_relative_eq!(
            integrate(&t, &AxisBox::of_grid(&g)).unwrap(),
            0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn integrate_fractional_overlap() {
        let g = unit(4, false);
        let one = ScalarField::from_cell_fn(&g, |_| 1.0);
        let r = AxisBox::new(&[0.1, 0.3], &[0.55, 0.8]);
        assert_relative_eq!(integrate(&one, &r).unwrap(), r.volume(), epsilon = 1e-14);
    }

    #[test]
    fn integrate_wraps_periodic() {
        let g = unit(4, true);
        let x = ScalarField::from_cell_fn(&g, |p| p[0]);
        // [-0.25, 0.25) wraps to cell centers 0.875 and 0.125
        let r = AxisBox::new(&[-0.25, 0.0], &[0.25, 1.0]);
        assert_relative_eq!(
            integrate(&x, &r).unwrap(),
            0.25 * (0.875 + 0.125),
            epsilon = 1e-14
        );
    }

    #[test]
    fn integrate_rejects_outside() {
        let g = unit(4, false);
        let one = ScalarField::from_cell_fn(&g, |_| 1.0);
        let r = AxisBox::new(&[-0.5, 0.0], &[0.5, 1.0]);
        assert!(matches!(
            integrate(&one, &r),
            Err(Error::RegionOutsideGrid(_))
        ));
    }

    proptest! {
        #[test]
        fn box_volume_matches(lo0 in 0.0..0.5f64, lo1 in 0.0..0.5f64, w0 in 0.0..0.5f64, w1 in 0.0..0.5f64) {
            let g = unit(13, false);
            let one = ScalarField::from_cell_fn(&g, |_| 1.0);
            let r = AxisBox::new(&[lo0, lo1], &[lo0 + w0, lo1 + w1]);
            prop_assert!((integrate(&one, &r).unwrap() - r.volume()).abs() < 1e-13);
        }

        #[test]
        fn gradient_and_integral_are_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, seed in 0u64..1000) {
            let g = unit(6, true);
            let f1 = ScalarField::from_node_fn(&g, |p| (p[0] * 7.0 + seed as f64).sin() * p[1].cos());
            let f2 = ScalarField::from_node_fn(&g, |p| (p[0] - 0.3 * p[1] + seed as f64 * 0.01).cos());
            let combo = ScalarField::new(g.clone(), Location::Node,
                f1.values().iter().zip(f2.values()).map(|(x, y)| a * x + b * y).collect()).unwrap();
            let (g1, g2, gc) = (gradient(&f1).unwrap(), gradient(&f2).unwrap(), gradient(&combo).unwrap());
            for i in 0..gc.values().len() {
                prop_assert!((gc.values()[i] - (a * g1.values()[i] + b * g2.values()[i])).abs() < 1e-11);
            }
            let r = AxisBox::new(&[0.1, 0.2], &[0.77, 0.9]);
            let i1 = integrate(&f1.to_cells(), &r).unwrap();
            let i2 = integrate(&f2.to_cells(), &r).unwrap();
            let ic = integrate(&combo.to_cells(), &r).unwrap();
            prop_assert!((ic - (a * i1 + b * i2)).abs() < 1e-12);
        }
    }
}
