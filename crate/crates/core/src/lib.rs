//! Numerical tools for multiplicative white noise under the Itô,
//! Stratonovich and Hänggi–Klimontovich (right-endpoint) interpretations.
//!
//! - [`paths`]: seedable Brownian paths, bridge refinement.
//! - [`integrals`]: Riemann sums under the three evaluation rules and the
//!   corrections between them.
//! - [`sde`]: interpretation-tagged models and drift conversion.
//! - [`solvers`]: path and ensemble simulation, boundaries, hitting times,
//!   exact Ornstein–Uhlenbeck oracles.
//! - [`fokker_planck`]: stationary densities, zero-flux evolution, entropy.
//! - [`physics`]: kinetic-energy model families and rest-start diagnostics.
//! - [`expr`]: the formula language used by configuration files.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expr;
pub mod fokker_planck;
pub mod integrals;
pub mod parallel;
pub mod paths;
pub mod physics;
pub mod sde;
pub mod solvers;
pub mod sum;

pub use error::{Error, Result};
