//! Traveling waves of the Euler-Korteweg system.
//!
//! * [`fluid_model`]: pressure/capillarity laws, normalization, cutoffs.
//! * [`wave1d`]: solitary waves by quadrature of the first integral, speed curves.
//! * [`spectral1d`]: Sturm-Liouville checks of the linearized operator.
//! * [`evolve1d`]: pseudo-spectral time integration and stability experiments.
//! * [`minimize2d`]: fixed-momentum minimization of the modified energy on tori.
//! * [`io`]: run configuration and the EKF1 field format.

pub mod error;
pub mod evolve1d;
pub mod fluid_model;
pub mod io;
pub mod minimize2d;
pub mod quad;
pub mod spectral1d;
pub mod torus;
pub mod wave1d;

pub use error::{Error, Result};
