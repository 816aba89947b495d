use super::estimates::{driver_energy, terminal_energy};
use super::rate::{fit_rate, RateFit};
use crate::convex::ConvexFunction;
use crate::error::{Error, Result};
use crate::generator::{Generator, TerminalCondition};
use crate::sim::MartingaleEnsemble;
use crate::solver::{solve_limit_with, PenalizedSolution, SolverConfig, TracePoint};

/// Rate fits of the distances between consecutive penalized solutions.
#[derive(Debug, Clone)]
pub struct CauchyReport {
    pub trace: Vec<TracePoint>,
    /// `sup_i e^{λt_i} mean|δY_i|²` against `ε + ε′`.
    pub sup: RateFit,
    /// `Σ e^{λt}(|δY|² + ‖δZ Q^{1/2}‖²)Δt` against `ε + ε′`.
    pub integral: RateFit,
    /// `mean sup_i e^{λt_i}|δY_i|²` against `ε + ε′`.
    pub pathwise_sup: RateFit,
    /// `E e^{λT}(|ξ|² + φ(ξ)) + Σ |F(t,0,0)|²Δt`.
    pub gamma: f64,
    /// The same with the driver term weighted by `e^{λt}`.
    pub gamma_weighted: f64,
}

/// Solves every `ε` of `eps_list` on the common ensemble and fits the
/// consecutive-pair distances against `ε + ε′`.
///
/// The fit needs three pairs, so `eps_list` must hold at least four values.
pub fn cauchy_estimate(
    phi: &dyn ConvexFunction,
    f: &Generator,
    xi: &TerminalCondition,
    ens: &MartingaleEnsemble,
    eps_list: &[f64],
    cfg: &SolverConfig,
) -> Result<CauchyReport> {
    cauchy_estimate_with(phi, f, xi, ens, eps_list, cfg, |_| Ok(()))
}

/// As [`cauchy_estimate`], calling `visit` on the solution at every `ε`.
pub fn cauchy_estimate_with(
    phi: &dyn ConvexFunction,
    f: &Generator,
    xi: &TerminalCondition,
    ens: &MartingaleEnsemble,
    eps_list: &[f64],
    cfg: &SolverConfig,
    visit: impl FnMut(&PenalizedSolution) -> Result<()>,
) -> Result<CauchyReport> {
    if eps_list.len() < 4 {
        return Err(Error::usage(format!(
            "rate fit needs at least 3 consecutive pairs, i.e. 4 epsilon values; got {}",
            eps_list.len()
        )));
    }
    let res = solve_limit_with(phi, f, xi, ens, eps_list, cfg, 0.0, visit)?;
    let sums: Vec<f64> = res
        .trace
        .iter()
        .map(|t| t.epsilon + t.epsilon_next)
        .collect();
    let pick = |g: fn(&TracePoint) -> f64| -> Vec<f64> { res.trace.iter().map(g).collect() };
    let sup = fit_rate(&sums, &pick(|t| t.distance.sup))?;
    let integral = fit_rate(&sums, &pick(|t| t.distance.integral))?;
    let pathwise_sup = fit_rate(&sums, &pick(|t| t.distance.pathwise_sup))?;
    let terminal = terminal_energy(&res.limit, Some(phi), cfg.lambda)?;
    Ok(CauchyReport {
        gamma: terminal + driver_energy(&res.limit, f, cfg.lambda, false),
        gamma_weighted: terminal + driver_energy(&res.limit, f, cfg.lambda, true),
        trace: res.trace,
        sup,
        integral,
        pathwise_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::Zero;
    use crate::sim::{simulate_ensemble, CovarianceSpec, TimeGrid};

    #[test]
    fn inactive_penalty_is_degenerate() {
        let cov = CovarianceSpec::identity(1).unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let ens = simulate_ensemble(&cov, &grid, 500, 3).unwrap();
        let xi = TerminalCondition::terminal_value(1);
        let cfg = SolverConfig::default();
        let eps = [0.4, 0.2, 0.1, 0.05];
        let err = cauchy_estimate(&Zero::new(1), &Generator::zero(), &xi, &ens, &eps, &cfg);
        assert!(matches!(err, Err(Error::Degenerate(_))), "{err:?}");
        let err = cauchy_estimate(
            &Zero::new(1),
            &Generator::zero(),
            &xi,
            &ens,
            &eps[..3],
            &cfg,
        );
        assert!(matches!(err, Err(Error::Usage(_))));
    }
}
