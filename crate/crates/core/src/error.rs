use thiserror::Error;

use crate::expr::ExprError;

/// Errors raised by the numerical routines.
///
/// Domain violations met while simulating are not errors: they are recorded
/// as events on the returned path.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} is not finite at x = {x}, t = {t}")]
    NonFinite { what: &'static str, x: f64, t: f64 },

    #[error("x = {x} lies outside the domain ({lo}, {hi})")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },

    #[error("diffusion coefficient {value:e} at x = {x} is below the admissible floor")]
    DegenerateDiffusion { x: f64, value: f64 },

    #[error("time step {dt:e} violates the stability bound; admissible dt <= {admissible:e}")]
    Unstable { dt: f64, admissible: f64 },

    #[error("divergent sum at n_steps = {n_steps}")]
    Divergence { n_steps: usize },

    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
