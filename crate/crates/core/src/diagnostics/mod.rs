//! Empirical counterparts of the a priori estimates, rate fits across `ε`,
//! and a binomial-tree reference for one-dimensional instances.

mod cauchy;
mod estimates;
mod rate;
mod tree;
mod uniqueness;

pub use cauchy::{cauchy_estimate, cauchy_estimate_with, CauchyReport};
pub use estimates::{
    a_priori_report, driver_energy, penalty_report, terminal_energy, EstimateReport, PenaltyReport,
};
pub use rate::{fit_rate, RateFit};
pub use tree::{tree_oracle_1d, MAX_TREE_STEPS};
pub use uniqueness::{pair_distance, uniqueness_probe, PairDistance, RunSpec, UniquenessReport};
