//! Backward regression solver for the penalized equation and its `ε → 0` limit.

mod limit;
mod penalized;
pub mod regression;

pub use limit::{
    orthogonality_report, solve_limit, solve_limit_with, validate_schedule, weighted_distance,
    LimitResult, OrthogonalityReport, TracePoint, WeightedDistance,
};
pub use penalized::{
    implicit_step, replay_penalized, solve_penalized, ImplicitStep, PenalizedSolution,
    SolverConfig, StepDiagnostics, StepFit, ZEstimator,
};

#[cfg(test)]
mod tests;
