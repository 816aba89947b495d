use std::path::Path;
use std::sync::Arc;

use crate::convex::{
    AbsValue, BallIndicator, BoxIndicator, HalfspaceIndicator, Phi, PositivePartPower, Quadratic,
    Zero,
};
use crate::error::{Error, Result};
use crate::generator::{admissible_lambda, Generator, TerminalCondition};
use crate::sim::{simulate_ensemble, CovarianceSpec, MartingaleEnsemble, TimeGrid};
use crate::solver::{ImplicitStep, SolverConfig, ZEstimator};

use super::config::ConfigDoc;

pub const PHI_KEYS: &[&str] = &["phi", "phi_c"];
pub const DRIVER_KEYS: &[&str] = &[
    "driver",
    "driver_a",
    "driver_b",
    "driver_c",
    "lambda_margin",
];
pub const TERMINAL_KEYS: &[&str] = &["terminal", "terminal_c", "terminal_scale", "terminal_power"];
pub const NOISE_KEYS: &[&str] = &["q", "q_diag"];
pub const GRID_KEYS: &[&str] = &["T", "n_steps", "n_paths", "seed"];
pub const SOLVER_KEYS: &[&str] = &[
    "degree",
    "ridge",
    "z_estimator",
    "implicit",
    "inner_iterations",
    "inner_tol",
    "cfl_ratio",
];

pub fn build_phi(doc: &ConfigDoc, d: usize) -> Result<Phi> {
    let c = doc.get_or("phi_c", 1.0)?;
    Ok(match doc.str_or("phi", "zero") {
        "zero" => Arc::new(Zero::new(d)),
        "quadratic" => Arc::new(Quadratic::new(d, c)?),
        "abs" => Arc::new(AbsValue::new(d, c)?),
        "nonnegative" => Arc::new(BoxIndicator::nonnegative(d)),
        "ball" => Arc::new(BallIndicator::new(d, c)?),
        "halfspace" => {
            let mut normal = vec![0.0; d];
            normal[0] = 1.0;
            Arc::new(HalfspaceIndicator::new(normal, c)?)
        }
        "positive_part_power" => Arc::new(PositivePartPower::new(d, c)?),
        other => return Err(Error::config(format!("unknown phi `{other}`"))),
    })
}

/// Driver and the `λ` derived from its declared constants.
pub fn build_driver(doc: &ConfigDoc, d: usize) -> Result<(Generator, f64)> {
    let a = doc.get_or("driver_a", 0.0)?;
    let b = doc.get_or("driver_b", 0.0)?;
    let c = doc.get_or("driver_c", 0.0)?;
    let mut w = vec![0.0; d];
    w[0] = b;
    let f = match doc.str_or("driver", "zero") {
        "zero" => Generator::zero(),
        "constant" => Generator::constant(vec![c; d]),
        "linear" => Generator::linear(a, 1.0, w, vec![c; d])?,
        "sine" => Generator::sine(w),
        other => return Err(Error::config(format!("unknown driver `{other}`"))),
    };
    let lambda = admissible_lambda(f.alpha, f.beta, doc.positive("lambda_margin", Some(1.0))?)?;
    Ok((f, lambda))
}

pub fn build_terminal(doc: &ConfigDoc, d: usize) -> Result<TerminalCondition> {
    let c = doc.get_or("terminal_c", 0.0)?;
    let scale = doc.get_or("terminal_scale", 1.0)?;
    Ok(match doc.str_or("terminal", "value") {
        "constant" => TerminalCondition::constant(vec![c; d]),
        "value" => TerminalCondition::affine(vec![c; d], scale),
        "positive_part" => TerminalCondition::positive_part(vec![c; d], scale),
        "power" => TerminalCondition::power(d, doc.get_or("terminal_power", 2)?),
        other => return Err(Error::config(format!("unknown terminal `{other}`"))),
    })
}

pub fn build_covariance(doc: &ConfigDoc, d: usize) -> Result<CovarianceSpec> {
    if doc.has("q_diag") {
        if doc.has("q") {
            return Err(Error::config("set either q or q_diag, not both"));
        }
        let diag: Vec<f64> = doc.list("q_diag")?;
        if diag.len() != d {
            return Err(Error::config(format!(
                "q_diag has {} entries, d = {d}",
                diag.len()
            )));
        }
        return CovarianceSpec::diagonal(&diag);
    }
    let q = doc.get_or("q", 1.0)?;
    CovarianceSpec::diagonal(&vec![q; d])
}

pub fn build_grid(doc: &ConfigDoc) -> Result<TimeGrid> {
    TimeGrid::new(doc.positive("T", None)?, doc.count("n_steps", None)?)
}

pub fn build_solver(doc: &ConfigDoc, epsilon: f64, lambda: f64) -> Result<SolverConfig> {
    let base = SolverConfig::default();
    let z_estimator = match doc.str_or("z_estimator", "joint") {
        "joint" => ZEstimator::Joint,
        "empirical" => ZEstimator::Empirical,
        "theoretical" => ZEstimator::Theoretical,
        other => return Err(Error::config(format!("unknown z_estimator `{other}`"))),
    };
    let implicit = match doc.str_or("implicit", "closed_form") {
        "closed_form" => ImplicitStep::ClosedForm,
        "fixed_point" => ImplicitStep::FixedPoint,
        other => return Err(Error::config(format!("unknown implicit step `{other}`"))),
    };
    let ridge: f64 = doc.get_or("ridge", base.ridge)?;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::config("ridge must be nonnegative"));
    }
    Ok(SolverConfig {
        epsilon,
        lambda,
        degree: doc.get_or("degree", base.degree)?,
        ridge,
        inner_iterations: doc.count("inner_iterations", Some(base.inner_iterations))?,
        inner_tol: doc.positive("inner_tol", Some(base.inner_tol))?,
        cfl_ratio: doc.positive("cfl_ratio", Some(base.cfl_ratio))?,
        implicit,
        z_estimator,
    })
}

/// Simulates the ensemble, or loads it from `cache` when the file exists
/// and writes it there otherwise.
pub fn load_ensemble(
    cov: &CovarianceSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    cache: Option<&Path>,
) -> Result<MartingaleEnsemble> {
    match cache {
        Some(path) if path.exists() => {
            let ens = MartingaleEnsemble::read_from(path, cov, grid)?;
            if ens.n_paths() != n_paths || ens.seed() != seed {
                return Err(Error::config(format!(
                    "cached ensemble {} holds {} paths from seed {}, config asks for {n_paths} from seed {seed}",
                    path.display(),
                    ens.n_paths(),
                    ens.seed()
                )));
            }
            Ok(ens)
        }
        Some(path) => {
            let ens = simulate_ensemble(cov, grid, n_paths, seed)?;
            ens.write_to(path)?;
            Ok(ens)
        }
        None => simulate_ensemble(cov, grid, n_paths, seed),
    }
}
