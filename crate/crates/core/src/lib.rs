//! Anticanonically balanced metrics on model Fano manifolds: FS and Hilb maps,
//! quantised Ding functionals, their slopes along Bergman geodesics, g-soliton
//! and coupled variants, and toric `δₘ` counting.

pub mod bergman;
pub mod coupled;
pub mod delta;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
mod par;
pub mod polytope;
pub mod quadrature;
pub mod random;
pub mod slope;
pub mod soliton;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::{GeodesicGenerator, HermitianForm};
pub use model::ManifoldModel;
