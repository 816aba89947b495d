//! Finite-dimensional Gaussian martingales with covariance density `Q(t)`.

mod covariance;
mod ensemble;
mod grid;
pub mod rng;

pub use covariance::{CovFactor, CovarianceSpec};
pub use ensemble::{
    empirical_bracket, isometry_check, simulate_ensemble, BracketNode, IsometryReport,
    MartingaleEnsemble, SimpleIntegrand,
};
pub use grid::TimeGrid;
