//! Penalized solver for backward stochastic variational inequalities driven
//! by Gaussian martingales with covariance operator `Q`.

pub mod bspde;
pub mod cli;
pub mod convex;
pub mod diagnostics;
pub mod error;
pub mod generator;
pub mod sim;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
