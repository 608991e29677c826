//! Evolving bulk–surface finite elements for a free-boundary tumour growth
//! model, together with discrete fractional Sobolev norms on the boundary.
//!
//! The unknowns are a bulk pressure `u` on a moving domain `Ω(t)` and the
//! normal `n` and mean curvature `H` of its boundary `Γ(t)`. The boundary
//! moves with normal velocity `V = −βH + αu`; `u` solves `−Δu = −1` with the
//! Robin condition `∂_n u + αu = βH + Q`. Interior nodes follow a discrete
//! harmonic extension of the boundary velocity.
//!
//! Everything numerical is generic over [`num::Real`]; the aliases below fix
//! the scalar to `f64`.

pub mod assembly;
pub mod error;
pub mod fracops;
pub mod geometry;
pub mod harness;
pub mod mesh;
pub mod num;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
pub use num::Real;

pub type Mesh = mesh::BulkSurfaceMesh<f64>;
pub type Surface = geometry::AnalyticSurface<f64>;
pub type Operators = assembly::OperatorSet<f64>;
pub type Sparse = sparse::SparseOperator<f64>;
pub type State = solver::NodalState<f64>;
pub type Config = solver::StepperConfig<f64>;
pub type Pencil = fracops::SurfacePencil<f64>;
pub type Factorization = fracops::SpectralFactorization<f64>;
