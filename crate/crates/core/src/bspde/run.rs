use nalgebra::{DMatrix, DVector};

use super::obstacle::CompositeObstacle;
use super::space::GalerkinSpace;
use crate::convex::{ConvexFunction, Zero};
use crate::error::{Error, Result};
use crate::generator::{Generator, TerminalCondition};
use crate::sim::MartingaleEnsemble;
use crate::solver::{
    solve_limit_with, solve_penalized, LimitResult, PenalizedSolution, SolverConfig,
};

/// Offsets of the test points used for the nodewise subgradient check.
const SUBGRADIENT_OFFSETS: [f64; 6] = [-1.0, -0.1, -1e-3, 1e-3, 0.1, 1.0];

/// Discrete counterparts of the solution properties for one `ε`.
///
/// Every `*_slack` field is nonnegative when the property holds.
#[derive(Debug, Clone, PartialEq)]
pub struct BspdeProperties {
    pub epsilon: f64,
    /// `10·inner_tol − max |Y_i + Δt U_i − Ê_i[Y_{i+1}] − F Δt|`.
    pub identity_slack: f64,
    /// `sup_i mean_p ½∫|∇Y_i|²`.
    pub max_energy: f64,
    /// `sup_i mean_p ‖ΔY_i‖_{L²}`.
    pub max_laplacian_norm: f64,
    /// `min ε|U_i(x_k)| − dist(Y_i(x_k), Dom j)`.
    pub domain_slack: f64,
    /// `min ε·max|U| − dist(Y_i(x_k), Dom j)`.
    pub band_slack: f64,
    /// `min j(w) − j(v_k) − g_k(w − v_k)` with `v = J_ε Y_i`, `g = U_i − Kv`.
    pub subgradient_slack: f64,
}

impl BspdeProperties {
    pub fn slacks(&self) -> [(&'static str, f64); 4] {
        [
            ("identity", self.identity_slack),
            ("domain", self.domain_slack),
            ("band", self.band_slack),
            ("subgradient", self.subgradient_slack),
        ]
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.max_energy.is_finite()
            && self.max_laplacian_norm.is_finite()
            && self.slacks().iter().all(|(_, s)| *s >= -tol)
    }
}

fn distance_to_domain(j: &dyn ConvexFunction, y: f64) -> f64 {
    if j.value(&[y]).is_finite() {
        return 0.0;
    }
    match j.project_domain(&[y]) {
        Some(p) => (y - p[0]).abs(),
        None => {
            let mut out = [0.0];
            match j.prox_into(1e-12, &[y], &mut out) {
                Ok(()) => (y - out[0]).abs(),
                Err(_) => f64::INFINITY,
            }
        }
    }
}

/// Checks properties (a)-(d) on a solution of the penalized obstacle problem.
pub fn check_bspde_properties(
    sol: &PenalizedSolution,
    phi: &CompositeObstacle,
    f: &Generator,
    cfg: &SolverConfig,
) -> Result<BspdeProperties> {
    let space = phi.space();
    let j = phi.density().as_ref();
    let (n, np, d) = (sol.n_steps(), sol.n_paths, sol.dim);
    let dt = sol.grid.dt();
    let eps = sol.epsilon;
    let mut identity: f64 = 0.0;
    let mut max_energy: f64 = 0.0;
    let mut max_lap: f64 = 0.0;
    let mut domain = f64::INFINITY;
    let mut subgradient = f64::INFINITY;
    let mut max_u: f64 = 0.0;
    let mut worst_dist: f64 = 0.0;
    let mut ky = vec![0.0; d];
    for i in 0..n {
        let t = sol.grid.node(i);
        let (mut energy, mut lap) = (0.0, 0.0);
        for p in 0..np {
            let (y, u, v) = (sol.y(i, p), sol.u(i, p), sol.resolvent(i, p));
            let e = sol.continuation(i, p);
            let drift = f.eval_checked(t, e, &sol.zq(i, p))?;
            for k in 0..d {
                identity = identity.max((y[k] + dt * u[k] - e[k] - drift[k] * dt).abs());
            }
            energy += space.energy(y);
            space.apply_stiffness(y, &mut ky);
            lap += space.l2_norm(&ky);
            let g = phi.density_part(u, v);
            for k in 0..d {
                let dist = distance_to_domain(j, y[k]);
                domain = domain.min(eps * u[k].abs() - dist);
                worst_dist = worst_dist.max(dist);
                max_u = max_u.max(u[k].abs());
                let jv = j.value(&[v[k]]);
                if !jv.is_finite() {
                    subgradient = f64::NEG_INFINITY;
                    continue;
                }
                for off in SUBGRADIENT_OFFSETS {
                    let w = v[k] + off;
                    let jw = j.value(&[w]);
                    if jw.is_finite() {
                        subgradient = subgradient.min(jw - jv - g[k] * off);
                    }
                }
            }
        }
        max_energy = max_energy.max(energy / np as f64);
        max_lap = max_lap.max(lap / np as f64);
    }
    Ok(BspdeProperties {
        epsilon: eps,
        identity_slack: 10.0 * cfg.inner_tol - identity,
        max_energy,
        max_laplacian_norm: max_lap,
        domain_slack: domain,
        band_slack: eps * max_u - worst_dist,
        subgradient_slack: subgradient,
    })
}

/// Limit run over an `ε` schedule with the property report of every run.
#[derive(Debug, Clone)]
pub struct ObstacleRun {
    pub limit: LimitResult,
    pub properties: Vec<BspdeProperties>,
}

impl ObstacleRun {
    pub fn holds(&self, tol: f64) -> bool {
        self.properties.iter().all(|p| p.holds(tol))
    }
}

/// Solves the penalized obstacle problem along `schedule` and checks the
/// discrete solution properties at every `ε`.
pub fn run_bspde_obstacle(
    phi: &CompositeObstacle,
    f: &Generator,
    xi: &TerminalCondition,
    ens: &MartingaleEnsemble,
    cfg: &SolverConfig,
    schedule: &[f64],
) -> Result<ObstacleRun> {
    if ens.dim() != phi.dim() {
        return Err(Error::usage(format!(
            "ensemble dimension {} does not match n_grid {}",
            ens.dim(),
            phi.dim()
        )));
    }
    for p in 0..ens.n_paths() {
        let v = xi.evaluate(ens, p)?;
        if !phi.value(&v).is_finite() {
            return Err(Error::config(format!(
                "terminal condition on path {p} lies outside the domain of {}",
                phi.name()
            )));
        }
    }
    let mut properties = Vec::with_capacity(schedule.len());
    let limit = solve_limit_with(phi, f, xi, ens, schedule, cfg, 0.0, |sol| {
        properties.push(check_bspde_properties(sol, phi, f, cfg)?);
        Ok(())
    })?;
    Ok(ObstacleRun { limit, properties })
}

/// Which reading of the linear equation to solve.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearVariant {
    /// `−dY = AY dt − Z dM − dN`.
    OperatorOnY(DMatrix<f64>),
    /// `−dY = a dt − Z dM − dN` with a fixed forcing vector.
    ConstantForcing(Vec<f64>),
}

/// The discrete heat operator `A = −K`.
pub fn heat_operator(space: &GalerkinSpace) -> DMatrix<f64> {
    -space.stiffness()
}

#[derive(Debug, Clone)]
pub struct LinearCaseResult {
    pub solution: PenalizedSolution,
    pub y0: Vec<f64>,
    /// `e^{AT}E[ξ]` or `E[ξ] + aT`.
    pub reference: Vec<f64>,
    /// `|Y_0 − reference| / |reference|` in the discrete `L²` norm.
    pub relative_error: f64,
}

impl LinearCaseResult {
    /// Relative error of the `k`-th sine coefficient of `Y_0`.
    pub fn mode_error(&self, space: &GalerkinSpace, k: usize) -> f64 {
        let a = space.mode_coefficient(&self.y0, k);
        let b = space.mode_coefficient(&self.reference, k);
        (a - b).abs() / b.abs()
    }
}

/// Solves the linear equation with `φ ≡ 0` and compares `Y_0` with its
/// closed form.
pub fn run_linear_case(
    space: &GalerkinSpace,
    variant: &LinearVariant,
    xi: &TerminalCondition,
    ens: &MartingaleEnsemble,
    cfg: &SolverConfig,
) -> Result<LinearCaseResult> {
    let d = space.n_grid();
    if ens.dim() != d || xi.dim() != d {
        return Err(Error::usage(format!(
            "linear case needs dimension {d} throughout"
        )));
    }
    let f = match variant {
        LinearVariant::OperatorOnY(a) => {
            if a.nrows() != d || a.ncols() != d {
                return Err(Error::usage("operator does not match n_grid"));
            }
            Generator::matrix_linear(a.clone())?
        }
        LinearVariant::ConstantForcing(a) => {
            if a.len() != d {
                return Err(Error::usage("forcing does not match n_grid"));
            }
            Generator::constant(a.clone())
        }
    };
    let solution = solve_penalized(&Zero::new(d), &f, xi, ens, cfg)?;
    let mut mean = DVector::zeros(d);
    for p in 0..ens.n_paths() {
        mean += DVector::from_vec(xi.evaluate(ens, p)?);
    }
    mean /= ens.n_paths() as f64;
    let horizon = ens.grid().horizon();
    let reference: Vec<f64> = match variant {
        LinearVariant::OperatorOnY(a) => ((a * horizon).exp() * mean).iter().copied().collect(),
        LinearVariant::ConstantForcing(a) => {
            mean.iter().zip(a).map(|(m, ak)| m + ak * horizon).collect()
        }
    };
    let y0 = solution.y0.clone();
    let diff: Vec<f64> = y0.iter().zip(&reference).map(|(a, b)| a - b).collect();
    let scale = space.l2_norm(&reference);
    let relative_error = if scale > 0.0 {
        space.l2_norm(&diff) / scale
    } else {
        space.l2_norm(&diff)
    };
    Ok(LinearCaseResult {
        solution,
        y0,
        reference,
        relative_error,
    })
}
