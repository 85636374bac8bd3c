//! Fourier-Galerkin truncation of the 3D stochastic Navier-Stokes equations
//! with degenerate forcing.
//!
//! - [`lattice`]: the cut-off sets, canonical half, generator test and the
//!   determining-set closure.
//! - [`drift`]: viscous plus quadratic drift, in complex and real form.
//! - [`brackets`]: double brackets `[[F0, V], W]`, their oracle, and the drift Jacobian.
//! - [`hormander`]: rank condition on the generated Lie algebra.
//! - [`sde`]: time stepping with mode-diagonal divergence-free noise.
//! - [`ergodicity`]: Lyapunov, mixing and support probes over ensembles.
//! - [`steering`]: shooting solver for the associated control system.

pub mod brackets;
pub mod drift;
pub mod error;
pub mod ergodicity;
pub mod hormander;
pub mod lattice;
pub mod sde;
pub mod state;
pub mod steering;
pub mod vec3;

pub use error::{Error, Result};
