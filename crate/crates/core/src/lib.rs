//! Linearized monotonicity inclusion detection for elastic plates from
//! time-harmonic boundary data.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which every production path uses.

pub mod config;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod monotonicity;
pub mod ntd;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh = mesh::Mesh<f64>;
pub type PlateGeometry = mesh::PlateGeometry<f64>;
pub type MaterialField = fem::MaterialField<f64>;
pub type Material = fem::Material<f64>;
pub type FrequencyConfig = fem::FrequencyConfig<f64>;
pub type Matrix = linalg::Matrix<f64>;
