use std::f64::consts::PI;

use homcarl_core::assembly::Assembler;
use homcarl_core::oracle1d::Oracle;
use homcarl_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn manufactured(p: &Point) -> f64 {
    (2.0 * PI * p[0]).cos() * (-2.0 * PI * p[1]).exp()
}

fn nodal_l2_error(u: &ScalarField, exact: impl Fn(&Point) -> f64) -> f64 {
    let g = u.grid();
    let e = ScalarField::from_node_fn(g, exact);
    let diff = u.sub(&e).unwrap().to_cells();
    (diff.values().iter().map(|v| v * v).sum::<f64>() * g.cell_volume()).sqrt()
}

#[test]
fn manufactured_solution_second_order() {
    let mut errors = Vec::new();
    let mut hs = Vec::new();
    for n in [64, 128, 256] {
        let g = make_grid(GridSpec::strip(1, 1.0, 1.0, n, n)).unwrap();
        let a = MatrixField::constant(&g, SymMat::identity(2));
        let bc = BoundaryData::periodic_with_top(manufactured, manufactured);
        let r = dirichlet_solve(&a, &bc, 1e-12).unwrap();
        errors.push(nodal_l2_error(&r.u, manufactured));
        hs.push(1.0 / n as f64);
        assert!(r.max_principle_excess() <= 1e-2 * 2.0);
    }
    let rate = fit::loglog_slope(&hs, &errors).unwrap();
    assert!(rate >= 1.8, "rate {rate}, errors {errors:?}");
}

fn checkerboard_problem() -> (MatrixField, BoundaryData) {
    let g = make_grid(GridSpec::strip(1, 1.0, 1.0, 32, 32)).unwrap();
    let t = PeriodicTemplate::random_checkerboard("cb", 2, 4, 0.1, 1.0, 3).unwrap();
    let a = MatrixField::from_cell_fn(&g, |p| t.eval(&[4.0 * p[0], 4.0 * p[1], 0.0]));
    let bc = BoundaryData::periodic(|p| (2.0 * PI * p[0]).sin() + 0.3 * (6.0 * PI * p[0]).cos());
    (a, bc)
}

#[test]
fn relaxed_maximum_principle() {
    let (a, bc) = checkerboard_problem();
    let r = dirichlet_solve(&a, &bc, 1e-10).unwrap();
    let (lo, hi) = r.boundary_range;
    assert!(r.max_principle_excess() <= 1e-2 * (hi - lo));
}

#[test]
fn energy_minimality() {
    let (a, bc) = checkerboard_problem();
    let r = dirichlet_solve(&a, &bc, 1e-12).unwrap();
    let sys = assemble_system(&a, &bc).unwrap();
    let g = a.grid();
    let asm = Assembler::new(g);
    let e0 = asm.energy(&a, &r.u);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let mut v = r.u.values().to_vec();
        for (node, val) in v.iter_mut().enumerate() {
            if !sys.is_fixed(node) {
                *val += 1e-3 * rng.gen_range(-1.0..1.0);
            }
        }
        let w = ScalarField::new(g.clone(), Location::Node, v).unwrap();
        assert!(e0 <= asm.energy(&a, &w) + 1e-12);
    }
}

#[test]
fn galerkin_orthogonality() {
    let (a, bc) = checkerboard_problem();
    let r = dirichlet_solve(&a, &bc, 1e-10).unwrap();
    let sys = assemble_system(&a, &bc).unwrap();
    let x: Vec<f64> = sys.free_nodes.iter().map(|&n| r.u.values()[n]).collect();
    let mut kx = vec![0.0; x.len()];
    sys.matrix.matvec(&x, &mut kx);
    let resid: Vec<f64> = kx.iter().zip(&sys.rhs).map(|(a, b)| a - b).collect();
    let bnorm = linalg::norm2(&sys.rhs);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let w: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wr = linalg::dot(&w, &resid).abs();
        assert!(wr <= 1e-10 * linalg::norm2(&w) * bnorm * 1.0001, "{wr}");
    }
}

/// Strip with x-independent data reduces to the 1-D problem; linear FEM is
/// nodally exact there.
fn strip_vs_oracle(profile: &Profile1D, eps: f64, t_cells: usize) -> f64 {
    let g = make_grid(GridSpec::strip(1, 1.0, 1.0, 4, t_cells)).unwrap();
    let a = MatrixField::from_cell_fn(&g, |p| SymMat::scalar(2, profile.a_at(p[1] / eps)));
    let f = VectorField::from_cell_fn(&g, |p| [0.0, profile.f_at(p[1]), 0.0]);
    let r = solve_error_equation(
        &a,
        &[FluxTerm::Cellwise(&f)],
        &SolveOptions::with_tol(1e-13),
    )
    .unwrap();
    let oracle = Oracle::new(profile, eps).unwrap();
    let mut worst = 0.0f64;
    for node in 0..g.n_nodes() {
        let p = g.node_coords(&g.node_multi(node));
        worst = worst.max((r.u.values()[node] + oracle.u(p[1])).abs());
    }
    worst
}

#[test]
fn oracle_matches_strip_reduction() {
    let cases = [
        (Profile1D::linear_forcing(vec![1.0, 3.0]).unwrap(), 0.25, 64),
        (
            Profile1D::new(
                vec![0.5, 1.0, 0.25],
                vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.2)],
            )
            .unwrap(),
            0.5,
            96,
        ),
        (
            Profile1D::new(
                vec![0.2, 1.0, 0.6, 0.9],
                vec![(0.0, 0.0), (0.25, 1.0), (1.0, -0.5)],
            )
            .unwrap(),
            0.25,
            64,
        ),
    ];
    for (p, eps, n) in cases {
        let err = strip_vs_oracle(&p, eps, n);
        assert!(err < 1e-9, "{err}");
    }
}
