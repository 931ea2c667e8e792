use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("region {0} lies outside the grid box")]
    RegionOutsideGrid(String),

    #[error("coefficient matrix at cell {cell} is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { cell: usize, asymmetry: f64 },

    #[error("ellipticity violated at cell {cell}: eigenvalues [{min}, {max}] not within [{lower}, {upper}]")]
    Ellipticity {
        cell: usize,
        min: f64,
        max: f64,
        lower: f64,
        upper: f64,
    },

    #[error("conjugate gradients did not converge: {iterations} iterations, relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error(
        "grid under-resolves generation {generation}: period {period:e} has {cells_per_period:.2} cells along axis {axis}, \
         need at least {min_cells}; use at least {required_cells} cells per unit length"
    )]
    UnderResolved {
        generation: i32,
        axis: usize,
        period: f64,
        cells_per_period: f64,
        min_cells: usize,
        required_cells: usize,
    },

    #[error("missing corrector data for template `{0}`")]
    MissingTemplate(String),

    #[error("invalid template `{label}`: {reason}")]
    InvalidTemplate { label: String, reason: String },

    #[error("invalid 1-D profile: {0}")]
    InvalidProfile(String),

    #[error("invalid boundary data: {0}")]
    InvalidBoundary(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
