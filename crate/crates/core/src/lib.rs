//! Adaptive vertex-centered finite volume / boundary element coupling for
//! convection-diffusion-reaction problems in a bounded polygon coupled to the
//! Laplace equation in the exterior, driven by residual error estimators.

pub mod adapt;
pub mod bem;
pub mod cli;
pub mod dual;
pub mod error;
pub mod estimator;
pub mod fvm;
pub mod mesh;
pub mod model;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
pub use mesh::{Domain, Mesh, Point};
