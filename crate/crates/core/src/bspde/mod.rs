//! Galerkin discretization of the obstacle problem on the unit interval:
//! `φ(u) = ½∫|∇u|² + ∫ j(u)` with homogeneous Dirichlet conditions, and the
//! linear heat-type case.

mod obstacle;
mod run;
mod space;

pub use obstacle::{build_obstacle_phi, CompositeObstacle, GS_MAX_SWEEPS, GS_TOL};
pub use run::{
    check_bspde_properties, heat_operator, run_bspde_obstacle, run_linear_case, BspdeProperties,
    LinearCaseResult, LinearVariant, ObstacleRun,
};
pub use space::GalerkinSpace;
