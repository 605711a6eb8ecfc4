//! Divergence-free spectral Galerkin solver for the p-Navier-Stokes equations
//! with symmetric p-Laplacian on the unit square, plus a measurement suite for
//! the energy identity and the inequalities the Galerkin scheme rests on.

pub mod analysis;
pub mod basis;
pub mod config;
pub mod error;
pub mod field;
pub mod galerkin;
pub mod helmholtz;
pub mod integrator;
pub mod par;
pub mod pipeline;
pub mod plot;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
