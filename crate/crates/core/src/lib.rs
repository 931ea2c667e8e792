//! Periodic homogenization on structured grids: cell problems, locally
//! periodic coefficient fields on Whitney boxes, Dirichlet solves on a
//! truncated strip, and Carleson/DKP functionals of the solutions.

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod analysis;
pub mod assembly;
pub mod cell;
pub mod dump;
pub mod error;
pub mod field;
pub mod fit;
pub mod grid;
pub mod linalg;
pub mod oracle1d;
pub mod solve;

pub use analysis::{
    carleson_functional, carleson_sup, dkp_alpha, dkp_carleson_integral, error_budget,
    two_scale_expand, CarlesonReport, DkpReport, ErrorBudget, Tent,
};
pub use cell::{solve_cell, CorrectorSet, PeriodicTemplate, SkewField, TemplateShape};
pub use error::{Error, Result};
pub use field::{
    assemble_a, assemble_abar, epsilon_for, eta_for, whitney_decompose, AInfinity, Assignment,
    CoefficientSpec, CorrectorLibrary, EpsilonSchedule, ScheduleMode, WhitneyBox, WhitneyLayout,
};
pub use grid::{
    gradient, integrate, make_grid, AxisBox, Grid, GridSpec, Location, MatrixField, Point,
    ScalarField, SymMat, VectorField,
};
pub use oracle1d::{exact_u_eps, exact_ubar, l2_error_curve, Profile1D};
pub use solve::{
    assemble_system, dirichlet_solve, solve_error_equation, BoundaryData, FluxTerm, SolveOptions,
    SolveReport,
};
