use thiserror::Error;

use crate::geometry::CartesianPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no scatterer produces sinusoid (alpha={alpha}, gamma={gamma}) on a circle of radius {radius}")]
    InvalidSinusoid { alpha: f64, gamma: f64, radius: f64 },

    #[error("return time of {time:.4e} s exceeds the time axis ({max_time:.4e} s)")]
    RangeOverflow { time: f64, max_time: f64 },

    #[error("scan circle point ({x:.4}, {y:.4}) lies outside the wall grid")]
    CircleOutOfBounds { x: f64, y: f64 },

    #[error("found {found} peaks above the score floor, {requested} requested")]
    InsufficientPeaks { found: usize, requested: usize },

    #[error("spheres do not intersect; least-squares point {point:?} has residual {residual:.4e} m")]
    NoIntersection { point: CartesianPoint, residual: f64 },

    #[error("scan points are collinear")]
    CollinearPoints,

    #[error("window [{lo:.4}, {hi:.4}] m^2 falls outside the sinogram range [{min:.4}, {max:.4}] m^2")]
    WindowOutOfRange { lo: f64, hi: f64, min: f64, max: f64 },

    #[error("sinogram carries no signal")]
    EmptySinogram,

    #[error("plane system needs about {required} bytes, budget is {budget}")]
    BudgetExceeded { required: usize, budget: usize },

    #[error("solver stopped after {iterations} iterations at relative residual {residual:.3e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("objective increased for {streak} consecutive iterations (at iteration {iteration})")]
    Diverged { iteration: usize, streak: usize },

    #[error("malformed tensor header: {0}")]
    MalformedHeader(String),

    #[error("payload holds {actual} bytes, header declares {expected}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("unsupported dtype {0:?}")]
    UnsupportedDtype(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image encoding failed: {0}")]
    Image(String),
}
