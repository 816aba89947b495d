use crate::convex::ConvexFunction;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::solver::PenalizedSolution;
use crate::stats::block_sum;

use nalgebra::DMatrix;

/// An empirical left side next to the data functional that bounds it.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub lhs: f64,
    pub gamma_term: f64,
    /// `lhs / gamma_term`, or `NaN` when both vanish.
    pub ratio: f64,
    pub context: String,
}

impl EstimateReport {
    fn new(lhs: f64, gamma_term: f64, context: String) -> Self {
        let ratio = if gamma_term > 0.0 {
            lhs / gamma_term
        } else if lhs == 0.0 {
            f64::NAN
        } else {
            f64::INFINITY
        };
        EstimateReport {
            lhs,
            gamma_term,
            ratio,
            context,
        }
    }
}

fn weights(sol: &PenalizedSolution, lambda: f64) -> Vec<f64> {
    (0..=sol.n_steps())
        .map(|i| (lambda * sol.grid.node(i)).exp())
        .collect()
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `Σ_i e^{λt_i} |F(t_i, 0, 0)|² Δt`, optionally without the weight.
pub fn driver_energy(sol: &PenalizedSolution, f: &Generator, lambda: f64, weighted: bool) -> f64 {
    let d = sol.dim;
    let zero = DMatrix::zeros(d, d);
    let dt = sol.grid.dt();
    (0..sol.n_steps())
        .map(|i| {
            let t = sol.grid.node(i);
            let w = if weighted { (lambda * t).exp() } else { 1.0 };
            w * sq(&f.eval(t, &vec![0.0; d], &zero)) * dt
        })
        .sum()
}

/// `mean_p e^{λT}(|ξ|² + φ(ξ))`; errors when `φ(ξ) = +∞` on some path.
pub fn terminal_energy(
    sol: &PenalizedSolution,
    phi: Option<&dyn ConvexFunction>,
    lambda: f64,
) -> Result<f64> {
    let n = sol.n_steps();
    let mut total = 0.0;
    let mut sums = Vec::with_capacity(sol.n_paths);
    for p in 0..sol.n_paths {
        let xi = sol.y(n, p);
        let pv = match phi {
            Some(phi) => phi.value(xi),
            None => 0.0,
        };
        if !pv.is_finite() {
            return Err(Error::config(format!(
                "terminal value on path {p} lies outside the domain of {}",
                phi.map(|f| f.name()).unwrap_or_default()
            )));
        }
        sums.push(sq(xi) + pv);
    }
    total += crate::stats::pairwise_sum(&sums);
    Ok((lambda * sol.grid.horizon()).exp() * total / sol.n_paths as f64)
}

/// Empirical left side of the a priori bound on `(Y, Z, N)` at `a = 0`:
/// `E sup e^{λt}|Y|² + Σ e^{λt}(|Y|² + ‖ZQ^{1/2}‖²)Δt + Σ e^{λt}|ΔN̂|²`
/// against `Γ₁ = E e^{λT}|ξ|² + Σ e^{λt}|F(t,0,0)|²Δt`.
pub fn a_priori_report(sol: &PenalizedSolution, f: &Generator, lambda: f64) -> EstimateReport {
    let n = sol.n_steps();
    let w = weights(sol, lambda);
    let dt = sol.grid.dt();
    let total = block_sum(sol.n_paths, 1, |p, acc| {
        let mut sup: f64 = 0.0;
        let mut integral = 0.0;
        for i in 0..=n {
            let y2 = sq(sol.y(i, p));
            sup = sup.max(w[i] * y2);
            if i < n {
                integral += w[i] * (y2 + sol.zq(i, p).norm_squared()) * dt;
                integral += w[i] * sq(sol.n_residual(i, p));
            }
        }
        acc[0] += sup + integral;
    })[0]
        / sol.n_paths as f64;
    let gamma = terminal_energy(sol, None, lambda).expect("no phi term")
        + driver_energy(sol, f, lambda, true);
    EstimateReport::new(
        total,
        gamma,
        format!("epsilon={} lambda={lambda} a=0", sol.epsilon),
    )
}

/// The three penalty estimates at `a = 0`, each against the same `Γ₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyReport {
    /// `Σ e^{λt}|U|²Δt`.
    pub force: EstimateReport,
    /// `e^{λ·0}φ(J_ε Y_0) + Σ e^{λt}φ(J_ε Y)Δt`.
    pub value: EstimateReport,
    /// `e^{λ·0}|Y_0 − J_ε Y_0|²`.
    pub distance: EstimateReport,
    /// `sup_i e^{λt_i} mean|Y_i − J_ε Y_i|²`, the same quantity over all steps.
    pub distance_sup: f64,
}

pub fn penalty_report(
    sol: &PenalizedSolution,
    phi: &dyn ConvexFunction,
    f: &Generator,
    lambda: f64,
) -> Result<PenaltyReport> {
    let n = sol.n_steps();
    let w = weights(sol, lambda);
    let dt = sol.grid.dt();
    let gamma = terminal_energy(sol, Some(phi), lambda)?
        + (0..n)
            .map(|i| {
                let t = sol.grid.node(i);
                let e = f.eta(t);
                w[i] * e * e * dt
            })
            .sum::<f64>();
    let width = 3 + n;
    let sums = block_sum(sol.n_paths, width, |p, acc| {
        for i in 0..n {
            acc[0] += w[i] * sq(sol.u(i, p)) * dt;
            let j = sol.resolvent(i, p);
            let v = phi.value(j);
            acc[1] += w[i] * v * dt;
            let gap: f64 = sol
                .y(i, p)
                .iter()
                .zip(j)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if i == 0 {
                acc[1] += v;
                acc[2] += gap;
            }
            acc[3 + i] += w[i] * gap;
        }
    });
    let np = sol.n_paths as f64;
    let ctx = format!("epsilon={} lambda={lambda} a=0", sol.epsilon);
    Ok(PenaltyReport {
        force: EstimateReport::new(sums[0] / np, gamma, ctx.clone()),
        value: EstimateReport::new(sums[1] / np, gamma, ctx.clone()),
        distance: EstimateReport::new(sums[2] / np, gamma, ctx),
        distance_sup: sums[3..].iter().map(|s| s / np).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{BoxIndicator, Zero};
    use crate::generator::TerminalCondition;
    use crate::sim::{simulate_ensemble, CovarianceSpec, TimeGrid};
    use crate::solver::{solve_penalized, SolverConfig};

    fn constant_solution(c: f64, lambda: f64) -> PenalizedSolution {
        let cov = CovarianceSpec::identity(1).unwrap();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let ens = simulate_ensemble(&cov, &grid, 200, 1).unwrap();
        let cfg = SolverConfig {
            epsilon: 0.2,
            lambda,
            ..SolverConfig::default()
        };
        let xi = TerminalCondition::constant(vec![c]);
        solve_penalized(&Zero::new(1), &Generator::zero(), &xi, &ens, &cfg).unwrap()
    }

    #[test]
    fn zero_solution_has_zero_terms() {
        let sol = constant_solution(0.0, 1.0);
        let r = a_priori_report(&sol, &Generator::zero(), 1.0);
        assert_eq!((r.lhs, r.gamma_term), (0.0, 0.0));
        let l2 = penalty_report(&sol, &Zero::new(1), &Generator::zero(), 1.0).unwrap();
        assert_eq!(l2.force.lhs, 0.0);
        assert_eq!(l2.value.lhs, 0.0);
        assert_eq!(l2.distance.lhs, 0.0);
    }

    #[test]
    fn constant_solution_closed_form() {
        let (c, lambda) = (1.5, 0.7);
        let sol = constant_solution(c, lambda);
        let r = a_priori_report(&sol, &Generator::zero(), lambda);
        let dt = 1.0 / 8.0;
        let riemann: f64 = (0..8)
            .map(|i| (lambda * i as f64 * dt).exp() * c * c * dt)
            .sum();
        let expected = lambda.exp() * c * c + riemann;
        assert!((r.lhs - expected).abs() < 1e-12, "{} vs {expected}", r.lhs);
        assert!((r.gamma_term - lambda.exp() * c * c).abs() < 1e-12);
    }

    #[test]
    fn infeasible_terminal_value_is_rejected() {
        let sol = constant_solution(-1.0, 1.0);
        let err = penalty_report(&sol, &BoxIndicator::nonnegative(1), &Generator::zero(), 1.0);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
