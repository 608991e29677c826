use thiserror::Error;

/// Errors raised by mesh construction, assembly, the spectral machinery and
/// the time integrator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported polynomial degree {0} (expected 1, 2 or 3)")]
    InvalidDegree(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node budget exceeded: mesh would have {nodes} nodes, budget is {budget}")]
    NodeBudgetExceeded { nodes: usize, budget: usize },

    #[error("degenerate element {element}: jacobian determinant {det:e} at quadrature point {point}")]
    DegenerateElement { element: usize, point: usize, det: f64 },

    #[error("degenerate boundary face {face}: surface measure {measure:e}")]
    DegenerateFace { face: usize, measure: f64 },

    #[error("mesh is not watertight: face {face:?} shared by {count} elements")]
    NotWatertight { face: [usize; 3], count: usize },

    #[error("closest-point projection did not converge for point ({x}, {y}, {z})")]
    ProjectionFailed { x: f64, y: f64, z: f64 },

    #[error("size mismatch for {what}: expected {expected}, got {got}")]
    SizeMismatch { what: &'static str, expected: usize, got: usize },

    #[error("linear solver did not converge: relative residual {residual:e} after {iterations} iterations (tolerance {tolerance:e})")]
    LinearSolve { residual: f64, iterations: usize, tolerance: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("symmetric eigensolver failed to converge")]
    EigenSolve,

    #[error("quadrature budget exceeded: {nodes} nodes, last relative change {change:e} (tolerance {tolerance:e})")]
    QuadratureBudget { nodes: usize, change: f64, tolerance: f64 },

    #[error("mesh quality {quality:e} fell below the abort threshold {threshold:e} at t = {time}")]
    QualityAbort { quality: f64, threshold: f64, time: f64 },

    #[error("normal field drifted from unit length by {drift:e} (budget {budget:e}) at t = {time}")]
    NormalDrift { drift: f64, budget: f64, time: f64 },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
