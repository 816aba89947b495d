use nalgebra::DMatrix;

use super::penalized::{solve_penalized, PenalizedSolution, SolverConfig};
use crate::convex::ConvexFunction;
use crate::error::{Error, Result};
use crate::generator::{Generator, TerminalCondition};
use crate::sim::MartingaleEnsemble;
use crate::stats::block_sum;

/// Exponentially weighted squared distances between two solutions on the
/// same ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedDistance {
    /// `sup_i e^{λt_i} mean_p |δY_i|²`.
    pub sup: f64,
    /// `Σ_i e^{λt_i} mean_p (|δY_i|² + ‖δZ_i Q_i^{1/2}‖²) Δt`.
    pub integral: f64,
    /// `mean_p sup_i e^{λt_i} |δY_i|²`.
    pub pathwise_sup: f64,
}

pub fn weighted_distance(
    a: &PenalizedSolution,
    b: &PenalizedSolution,
    lambda: f64,
) -> Result<WeightedDistance> {
    if a.grid != b.grid || a.dim != b.dim || a.n_paths != b.n_paths {
        return Err(Error::usage("solutions live on different ensembles"));
    }
    let (n, np, d) = (a.n_steps(), a.n_paths, a.dim);
    let dt = a.grid.dt();
    let weights: Vec<f64> = (0..=n).map(|i| (lambda * a.grid.node(i)).exp()).collect();
    // Per-step sums of |δY|², ‖δZQ^{1/2}‖², then the pathwise sup.
    let width = 2 * (n + 1) + 1;
    let sums = block_sum(np, width, |p, acc| {
        let mut sup: f64 = 0.0;
        for i in 0..=n {
            let dy: f64 = (0..d).map(|k| (a.y(i, p)[k] - b.y(i, p)[k]).powi(2)).sum();
            acc[i] += dy;
            sup = sup.max(weights[i] * dy);
            if i < n {
                let dz: DMatrix<f64> = a.zq(i, p) - b.zq(i, p);
                acc[n + 1 + i] += dz.norm_squared();
            }
        }
        acc[2 * (n + 1)] += sup;
    });
    let npf = np as f64;
    let sup = (0..=n)
        .map(|i| weights[i] * sums[i] / npf)
        .fold(0.0, f64::max);
    let integral = (0..n)
        .map(|i| weights[i] * (sums[i] + sums[n + 1 + i]) / npf * dt)
        .sum();
    Ok(WeightedDistance {
        sup,
        integral,
        pathwise_sup: sums[2 * (n + 1)] / npf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub epsilon: f64,
    pub epsilon_next: f64,
    pub distance: WeightedDistance,
}

#[derive(Debug, Clone)]
pub struct LimitResult {
    /// Solution at the smallest `ε` of the schedule.
    pub limit: PenalizedSolution,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.len() < 2 {
        return Err(Error::usage("epsilon schedule needs at least 2 entries"));
    }
    if schedule.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::usage("epsilon must be positive"));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::usage("epsilon schedule must be strictly decreasing"));
    }
    Ok(())
}

/// Solves along a decreasing `ε` schedule on one ensemble and traces the
/// distance between consecutive solutions.
pub fn solve_limit(
    phi: &dyn ConvexFunction,
    f: &Generator,
    xi: &TerminalCondition,
    ens: &MartingaleEnsemble,
    schedule: &[f64],
    cfg: &SolverConfig,
    threshold: f64,
) -> Result<LimitResult> {
    solve_limit_with(phi, f, xi, ens, schedule, cfg, threshold, |_| Ok(()))
}

/// As [`solve_limit`], calling `visit` on every intermediate solution.
#[allow(clippy::too_many_arguments)]
pub fn solve_limit_with(
    phi: &dyn ConvexFunction,
    f: &Generator,
    xi: &TerminalCondition,
    ens: &MartingaleEnsemble,
    schedule: &[f64],
    cfg: &SolverConfig,
    threshold: f64,
    mut visit: impl FnMut(&PenalizedSolution) -> Result<()>,
) -> Result<LimitResult> {
    validate_schedule(schedule)?;
    for &e in schedule {
        cfg.with_epsilon(e).validate(ens.grid())?;
    }
    let mut prev = solve_penalized(phi, f, xi, ens, &cfg.with_epsilon(schedule[0]))?;
    visit(&prev)?;
    let mut trace = Vec::with_capacity(schedule.len() - 1);
    let mut warnings = Vec::new();
    for &e in &schedule[1..] {
        let next = solve_penalized(phi, f, xi, ens, &cfg.with_epsilon(e))?;
        visit(&next)?;
        let distance = weighted_distance(&prev, &next, cfg.lambda)?;
        if let Some(last) = trace.last() {
            let last: &TracePoint = last;
            if distance.sup > 2.0 * last.distance.sup {
                warnings.push(format!(
                    "distance grew from {:e} to {:e} as epsilon decreased to {e}",
                    last.distance.sup, distance.sup
                ));
            }
        }
        trace.push(TracePoint {
            epsilon: prev.epsilon,
            epsilon_next: e,
            distance,
        });
        prev = next;
    }
    let converged = trace.last().is_some_and(|t| t.distance.sup <= threshold);
    Ok(LimitResult {
        limit: prev,
        trace,
        converged,
        warnings,
    })
}

/// Strong-orthogonality and residual-energy summary of `ΔN̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    /// `mean_p Σ_i ΔN̂_i ΔM_iᵀ`.
    pub cross: DMatrix<f64>,
    pub cross_std_err: DMatrix<f64>,
    /// `Σ_i mean_p |ΔN̂_i|²`.
    pub residual_energy: f64,
    pub per_step_energy: Vec<f64>,
}

pub fn orthogonality_report(
    sol: &PenalizedSolution,
    ens: &MartingaleEnsemble,
) -> Result<OrthogonalityReport> {
    if sol.n_paths != ens.n_paths() || sol.grid != *ens.grid() || sol.seed != ens.seed() {
        return Err(Error::usage("solution was not produced from this ensemble"));
    }
    let (n, np, d) = (sol.n_steps(), sol.n_paths, sol.dim);
    let dd = d * d;
    let width = 2 * dd + n;
    let sums = block_sum(np, width, |p, acc| {
        let mut cross = vec![0.0; dd];
        for i in 0..n {
            let nr = sol.n_residual(i, p);
            let inc = ens.increment(p, i);
            for a in 0..d {
                for b in 0..d {
                    cross[a * d + b] += nr[a] * inc[b];
                }
            }
            acc[2 * dd + i] += nr.iter().map(|x| x * x).sum::<f64>();
        }
        for (e, c) in cross.iter().enumerate() {
            acc[e] += c;
            acc[dd + e] += c * c;
        }
    });
    let npf = np as f64;
    let cross = DMatrix::from_fn(d, d, |a, b| sums[a * d + b] / npf);
    let cross_std_err = DMatrix::from_fn(d, d, |a, b| {
        if np < 2 {
            return 0.0;
        }
        let m = cross[(a, b)];
        let var = (sums[dd + a * d + b] / npf - m * m).max(0.0) * npf / (npf - 1.0);
        (var / npf).sqrt()
    });
    let per_step_energy: Vec<f64> = (0..n).map(|i| sums[2 * dd + i] / npf).collect();
    Ok(OrthogonalityReport {
        cross,
        cross_std_err,
        residual_energy: per_step_energy.iter().sum(),
        per_step_energy,
    })
}
