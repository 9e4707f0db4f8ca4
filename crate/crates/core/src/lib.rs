//! Numerical laboratory for isotropic unimodal Lévy processes killed on
//! leaving ball domains, and for their drift perturbations.

pub mod error;
pub mod quad;
pub mod special;
pub mod spectral;
pub mod cubature;
pub mod geometry;
pub mod grid;
pub mod kernels;
pub mod simulate;
pub mod duhamel;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{Ball, Domain};
pub use grid::{CellGrid, GreenGrid};
pub use kernels::{DriftField, ExactBallGreen, GreenKernel, SharpGreen};
pub use simulate::{Engine, ExitRecord};
pub use spectral::{Family, ProcessSpec};
pub use stats::Estimator;
