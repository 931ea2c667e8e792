//! Carleson tent functionals, DKP oscillation integrals, the localized
//! two-scale expansion and its error budget.

pub mod budget;
pub mod carleson;
pub mod dkp;
pub mod two_scale;

pub use budget::{
    box_budget, box_hessian, corrector_constant, error_budget, error_budget_with_z, BoxBudget,
    BudgetInputs, ErrorBudget,
};
pub use carleson::{
    aligned_centers, carleson_functional, carleson_sup, dyadic_radii, CarlesonDensity,
    CarlesonReport, RadiusSummary, Tent, TentValue,
};
pub use dkp::{dkp_alpha, dkp_carleson_integral, DkpReport, SlabValue};
pub use two_scale::{nodal_gradient, two_scale_expand};
