//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use homcarl_core::{
    assemble_a, make_grid, solve_cell, AInfinity, Assignment, BoundaryData, CoefficientSpec,
    CorrectorLibrary, EpsilonSchedule, Grid, GridSpec, MatrixField, PeriodicTemplate, ScheduleMode,
};

pub fn laminate_library(resolution: usize) -> CorrectorLibrary {
    let t = PeriodicTemplate::laminate("lam", 2, 0, vec![0.25, 1.0]).expect("valid laminate");
    let mut lib = CorrectorLibrary::new();
    lib.insert(
        "lam".into(),
        solve_cell(&t, resolution).expect("cell solve"),
    );
    lib
}

pub fn headline_spec(depth: usize) -> CoefficientSpec {
    CoefficientSpec {
        n: 1,
        x_extent: 1.0,
        depth,
        schedule: EpsilonSchedule::new(ScheduleMode::Constant, 3.0, 2.0),
        assignment: Assignment::Single {
            template: "lam".into(),
        },
        a_inf: AInfinity::Homogenized {
            template: "lam".into(),
        },
        lower: 0.25,
        upper: 1.0,
    }
}

/// Oscillating field on a `cells × 2 cells` strip of height 2.
pub fn headline_field(cells: usize, depth: usize) -> (Grid, MatrixField) {
    let g = make_grid(GridSpec::strip(1, 1.0, 2.0, cells, 2 * cells)).expect("grid");
    let a = assemble_a(&headline_spec(depth), &g, &laminate_library(64)).expect("assembly");
    (g, a)
}

pub fn random_checkerboard_field(cells: usize, periods: f64) -> MatrixField {
    let g = make_grid(GridSpec::strip(1, 1.0, 1.0, cells, cells)).expect("grid");
    let t = PeriodicTemplate::random_checkerboard("cb", 2, 4, 0.1, 1.0, 3).expect("template");
    MatrixField::from_cell_fn(&g, |p| t.eval(&[periods * p[0], periods * p[1], 0.0]))
}

pub fn cosine_data() -> BoundaryData {
    BoundaryData::periodic(|p| (2.0 * PI * p[0]).cos())
}
