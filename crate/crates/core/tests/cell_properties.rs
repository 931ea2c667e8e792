use homcarl_core::cell::{divergence_residual, solve_cell_with, CellProblem};
use homcarl_core::*;

fn random_templates() -> Vec<PeriodicTemplate> {
    (0..5)
        .map(|s| {
            PeriodicTemplate::random_checkerboard(
                format!("cb{s}"),
                2,
                2 + s as usize,
                0.2,
                1.0,
                100 + s,
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn voigt_reuss_on_random_templates() {
    for t in random_templates() {
        let set = solve_cell(&t, 64).unwrap();
        let (harm, arith) = t.mean_bounds(64).unwrap();
        let lo = set.abar.sub(&harm).eigenvalues();
        let hi = arith.sub(&set.abar).eigenvalues();
        assert!(
            lo.iter().chain(&hi).all(|&e| e >= -1e-8),
            "{}: {lo:?} {hi:?}",
            t.label
        );
        assert!(set.diagnostics.abar_asymmetry <= 1e-8);
        assert!(set
            .diagnostics
            .corrector_means
            .iter()
            .all(|m| m.abs() < 1e-12));
    }
}

#[test]
fn abar_is_cauchy_under_refinement() {
    let t = &random_templates()[1];
    let a: Vec<SymMat> = [64, 128, 256]
        .iter()
        .map(|&r| solve_cell(t, r).unwrap().abar)
        .collect();
    let d1 = a[1].sub(&a[0]).op_norm();
    let d2 = a[2].sub(&a[1]).op_norm();
    assert!(d2 < d1, "{d1} {d2}");
}

#[test]
fn flux_corrector_residual_decreases() {
    let t = PeriodicTemplate::new(
        "smooth",
        2,
        TemplateShape::Smooth {
            base: 0.6,
            amplitude: 0.35,
        },
    )
    .unwrap();
    let res: Vec<f64> = [64, 128]
        .iter()
        .map(|&r| {
            let set = solve_cell(&t, r).unwrap();
            set.diagnostics
                .divergence_residuals
                .iter()
                .copied()
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(res[1] < 0.5 * res[0], "{res:?}");

    // also for discontinuous templates, if more slowly
    let t = &random_templates()[0];
    let r: Vec<f64> = [32, 64]
        .iter()
        .map(|&n| {
            let p = CellProblem::new(t, n).unwrap();
            let s = solve_cell_with(p, t, n).unwrap();
            divergence_residual(&s.sigma[0], &s.flux[0]).unwrap()
        })
        .collect();
    assert!(r[1] < r[0]);
}

#[test]
fn three_dimensional_laminate() {
    let t = PeriodicTemplate::laminate("l3", 3, 2, vec![1.0, 3.0]).unwrap();
    let set = solve_cell(&t, 16).unwrap();
    for (i, want) in [2.0, 2.0, 1.5].iter().enumerate() {
        assert!((set.abar.get(i, i) - want).abs() < 1e-8);
    }
    assert!(set.abar.get(0, 1).abs() < 1e-10);
}
