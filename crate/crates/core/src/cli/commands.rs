use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::bspde::{
    build_obstacle_phi, heat_operator, run_bspde_obstacle, run_linear_case, GalerkinSpace,
    LinearVariant,
};
use crate::convex::{check_barbu_properties, check_cross_monotonicity, sample_box, Phi, Zero};
use crate::convex::{AbsValue, BoxIndicator};
use crate::diagnostics::{cauchy_estimate, fit_rate, penalty_report};
use crate::error::{Error, Result};
use crate::generator::{Generator, TerminalCondition};
use crate::solver::{solve_limit, solve_penalized, PenalizedSolution};

use super::build::*;
use super::config::ConfigDoc;

/// Slack below which a property check fails.
pub const SLACK_TOL: f64 = 1e-9;
/// Slack tolerance for the discrete BSPDE properties.
pub const BSPDE_SLACK_TOL: f64 = 1e-6;

/// Result of a command: whether its checks passed and which files it wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn concat<'a>(groups: &[&[&'a str]]) -> Vec<&'a str> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

fn write_csv(out: &Path, name: &str, body: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

pub fn prox_check(doc: &ConfigDoc, out: &Path) -> Result<Outcome> {
    let allowed = concat(&[
        PHI_KEYS,
        &[
            "instance",
            "d",
            "epsilon",
            "n_points",
            "half_width",
            "seed",
            "pairs",
        ],
    ]);
    doc.check_keys(&allowed, &["phi", "d"])?;
    let d = doc.count("d", None)?;
    let phi = build_phi(doc, d)?;
    let eps_list: Vec<f64> = if doc.has("epsilon") {
        doc.list("epsilon")?
    } else {
        vec![1.0, 0.1, 0.01]
    };
    if eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::config("epsilon must be positive"));
    }
    let n_points = doc.count("n_points", Some(1000))?;
    let half_width = doc.positive("half_width", Some(5.0))?;
    let seed = doc.get_or("seed", 0u64)?;
    let pairs = doc.count("pairs", Some(n_points / 2))?.min(n_points / 2);
    let sample = sample_box(d, n_points, half_width, seed);

    let mut csv = String::from("phi,epsilon,property,worst_slack\n");
    let mut worst = f64::INFINITY;
    for &eps in &eps_list {
        let rep = check_barbu_properties(phi.as_ref(), eps, &sample)?;
        let mut cross = f64::INFINITY;
        for k in 0..pairs {
            let s = check_cross_monotonicity(
                phi.as_ref(),
                eps,
                0.5 * eps,
                &sample[2 * k],
                &sample[2 * k + 1],
            )?;
            cross = cross.min(s);
        }
        if pairs == 0 {
            cross = 0.0;
        }
        for (name, slack) in [
            ("moreau_identity", rep.moreau_identity),
            ("envelope_bounds", rep.envelope_bounds),
            ("firm_nonexpansive", rep.firm_nonexpansive),
            ("subgradient", rep.subgradient),
            ("cross_monotonicity", cross),
        ] {
            worst = worst.min(slack);
            writeln!(csv, "{},{eps},{name},{}", phi.name(), slack + 0.0).unwrap();
        }
    }
    let file = write_csv(out, "prox_check.csv", &csv)?;
    Ok(Outcome {
        passed: worst >= -SLACK_TOL,
        files: vec![file],
        summary: format!("{}: worst slack {worst:e}", phi.name()),
    })
}

struct Instance {
    phi: Phi,
    f: Generator,
    xi: TerminalCondition,
    lambda: f64,
    ens: crate::sim::MartingaleEnsemble,
}

fn instance(doc: &ConfigDoc, cache: Option<&Path>) -> Result<Instance> {
    let d = doc.count("d", None)?;
    let phi = build_phi(doc, d)?;
    let (f, lambda) = build_driver(doc, d)?;
    let xi = build_terminal(doc, d)?;
    let cov = build_covariance(doc, d)?;
    let grid = build_grid(doc)?;
    let n_paths = doc.count("n_paths", None)?;
    let seed = doc.get("seed")?;
    let ens = load_ensemble(&cov, &grid, n_paths, seed, cache)?;
    Ok(Instance {
        phi,
        f,
        xi,
        lambda,
        ens,
    })
}

fn instance_keys<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    concat(&[
        PHI_KEYS,
        DRIVER_KEYS,
        TERMINAL_KEYS,
        NOISE_KEYS,
        GRID_KEYS,
        SOLVER_KEYS,
        &["instance", "d"],
        extra,
    ])
}

fn solution_rows(sol: &PenalizedSolution) -> String {
    let mut csv = String::from("t,mean_Y_norm,mean_Z_norm,mean_U_norm,residual_N_energy\n");
    let np = sol.n_paths as f64;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for i in 0..=sol.n_steps() {
        let t = sol.grid.node(i);
        let y = crate::stats::pairwise_sum(
            &(0..sol.n_paths)
                .map(|p| norm(sol.y(i, p)))
                .collect::<Vec<_>>(),
        ) / np;
        let (z, u, n) = if i < sol.n_steps() {
            let z: Vec<f64> = (0..sol.n_paths).map(|p| sol.z(i, p).norm()).collect();
            let u: Vec<f64> = (0..sol.n_paths).map(|p| norm(sol.u(i, p))).collect();
            let n: Vec<f64> = (0..sol.n_paths)
                .map(|p| sol.n_residual(i, p).iter().map(|x| x * x).sum())
                .collect();
            (
                crate::stats::pairwise_sum(&z) / np,
                crate::stats::pairwise_sum(&u) / np,
                crate::stats::pairwise_sum(&n) / np,
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        writeln!(csv, "{t},{y},{z},{u},{n}").unwrap();
    }
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    writeln!(csv, "Y0,{}", join(&sol.y0)).unwrap();
    writeln!(csv, "Y0_std_err,{}", join(&sol.y0_std_err)).unwrap();
    csv
}

pub fn solve(doc: &ConfigDoc, out: &Path, cache: Option<&Path>) -> Result<Outcome> {
    doc.check_keys(
        &instance_keys(&["epsilon", "schedule"]),
        &["phi", "terminal", "d", "T", "n_steps", "n_paths", "seed"],
    )?;
    if doc.has("epsilon") == doc.has("schedule") {
        return Err(Error::config("set exactly one of epsilon or schedule"));
    }
    let inst = instance(doc, cache)?;
    let sol = if doc.has("epsilon") {
        let cfg = build_solver(doc, doc.positive("epsilon", None)?, inst.lambda)?;
        solve_penalized(inst.phi.as_ref(), &inst.f, &inst.xi, &inst.ens, &cfg)?
    } else {
        let schedule: Vec<f64> = doc.list("schedule")?;
        let cfg = build_solver(doc, schedule[0], inst.lambda)?;
        solve_limit(
            inst.phi.as_ref(),
            &inst.f,
            &inst.xi,
            &inst.ens,
            &schedule,
            &cfg,
            0.0,
        )?
        .limit
    };
    let file = write_csv(out, "solve.csv", &solution_rows(&sol))?;
    Ok(Outcome {
        passed: true,
        files: vec![file],
        summary: format!("Y0 = {:?} (std err {:?})", sol.y0, sol.y0_std_err),
    })
}

pub fn converge(doc: &ConfigDoc, out: &Path, cache: Option<&Path>) -> Result<Outcome> {
    doc.check_keys(
        &instance_keys(&["schedule", "mode", "slope_min", "slope_max", "r2_min"]),
        &[
            "phi", "terminal", "d", "T", "n_steps", "n_paths", "seed", "schedule",
        ],
    )?;
    let inst = instance(doc, cache)?;
    let schedule: Vec<f64> = doc.list("schedule")?;
    let cfg = build_solver(doc, schedule[0], inst.lambda)?;
    let mode = doc.str_or("mode", "cauchy");
    let (default_min, default_max) = match mode {
        "cauchy" => (0.8, 1.5),
        "penalty" => (1.7, f64::INFINITY),
        other => return Err(Error::config(format!("unknown mode `{other}`"))),
    };
    let slope_min = doc.get_or("slope_min", default_min)?;
    let slope_max = doc.get_or("slope_max", default_max)?;
    let r2_min = doc.get_or("r2_min", if mode == "cauchy" { 0.9 } else { 0.0 })?;
    let mut csv =
        String::from("eps_pair_sum,weighted_sq_dist_sup,weighted_sq_dist_int,slope_running\n");
    let (slope, r2) = if mode == "cauchy" {
        let rep = cauchy_estimate(
            inst.phi.as_ref(),
            &inst.f,
            &inst.xi,
            &inst.ens,
            &schedule,
            &cfg,
        )?;
        let running = rep.sup.running_slopes();
        for (k, tp) in rep.trace.iter().enumerate() {
            let r = if k == 0 {
                String::new()
            } else {
                running[k - 1].to_string()
            };
            writeln!(
                csv,
                "{},{},{},{r}",
                tp.epsilon + tp.epsilon_next,
                tp.distance.sup,
                tp.distance.integral
            )
            .unwrap();
        }
        writeln!(
            csv,
            "fit,{},{},{}",
            rep.sup.slope, rep.integral.slope, rep.sup.r_squared
        )
        .unwrap();
        (rep.sup.slope, rep.sup.r_squared)
    } else {
        crate::solver::validate_schedule(&schedule)?;
        let mut at_zero = Vec::with_capacity(schedule.len());
        let mut sup = Vec::with_capacity(schedule.len());
        for &e in &schedule {
            let sol = solve_penalized(
                inst.phi.as_ref(),
                &inst.f,
                &inst.xi,
                &inst.ens,
                &cfg.with_epsilon(e),
            )?;
            let rep = penalty_report(&sol, inst.phi.as_ref(), &inst.f, cfg.lambda)?;
            at_zero.push(rep.distance.lhs);
            sup.push(rep.distance_sup);
        }
        let fit = fit_rate(&schedule, &at_zero)?;
        let running = fit.running_slopes();
        for k in 0..schedule.len() {
            let r = if k == 0 {
                String::new()
            } else {
                running[k - 1].to_string()
            };
            writeln!(csv, "{},{},{},{r}", schedule[k], at_zero[k], sup[k]).unwrap();
        }
        let sup_slope = fit_rate(&schedule, &sup)
            .map(|f| f.slope)
            .unwrap_or(f64::NAN);
        writeln!(csv, "fit,{},{},{}", fit.slope, sup_slope, fit.r_squared).unwrap();
        (fit.slope, fit.r_squared)
    };
    let file = write_csv(out, "converge.csv", &csv)?;
    Ok(Outcome {
        passed: slope >= slope_min && slope <= slope_max && r2 >= r2_min,
        files: vec![file],
        summary: format!("{mode} slope {slope:.4} (R² {r2:.4}), band [{slope_min}, {slope_max}]"),
    })
}

pub fn bspde(doc: &ConfigDoc, out: &Path, cache: Option<&Path>) -> Result<Outcome> {
    let allowed = concat(&[
        GRID_KEYS,
        SOLVER_KEYS,
        &[
            "instance",
            "case",
            "n_grid",
            "noise_scale",
            "noise_decay",
            "amplitude",
            "terminal",
            "density",
            "forcing",
            "variant",
            "operator",
            "epsilon",
            "schedule",
            "tolerance",
            "lambda",
        ],
    ]);
    doc.check_keys(
        &allowed,
        &["case", "n_grid", "T", "n_steps", "n_paths", "seed"],
    )?;
    let space = GalerkinSpace::new(doc.count("n_grid", None)?)?;
    let d = space.n_grid();
    let cov = space.sine_covariance(
        doc.get_or("noise_scale", 1.0)?,
        doc.get_or("noise_decay", 2.0)?,
    )?;
    let grid = build_grid(doc)?;
    let ens = load_ensemble(
        &cov,
        &grid,
        doc.count("n_paths", None)?,
        doc.get("seed")?,
        cache,
    )?;
    let lambda = doc.get_or("lambda", 1.0)?;
    let amplitude = doc.get_or("amplitude", 1.0)?;
    let s1 = space.sine(1);
    let mut doc_solver = doc.clone();
    if !doc.has("degree") {
        doc_solver.set("degree", "1");
    }
    if !doc.has("z_estimator") {
        doc_solver.set("z_estimator", "empirical");
    }
    let mut props = String::from("epsilon,property,slack\n");
    let (sol, passed, summary) = match doc.str_or("case", "") {
        case @ ("heat" | "linear") => {
            let cfg = build_solver(&doc_solver, doc.positive("epsilon", Some(1.0))?, lambda)?;
            let operator = match (case, doc.str_or("operator", "heat")) {
                ("heat", _) | (_, "heat") => {
                    let rate = grid.dt() * space.eigenvalue(d);
                    if rate >= 2.0 {
                        return Err(Error::config(format!(
                            "explicit heat step is unstable: dt*mu_max = {rate:.3} (needs < 2), raise n_steps"
                        )));
                    }
                    heat_operator(&space)
                }
                (_, "zero") => nalgebra::DMatrix::zeros(d, d),
                (_, other) => return Err(Error::config(format!("unknown operator `{other}`"))),
            };
            let variant = match (case, doc.str_or("variant", "operator")) {
                ("heat", _) | (_, "operator") => LinearVariant::OperatorOnY(operator),
                (_, "forcing") => {
                    let c = doc.get_or("forcing", 0.0)?;
                    LinearVariant::ConstantForcing(s1.iter().map(|x| c * x).collect())
                }
                (_, other) => return Err(Error::config(format!("unknown variant `{other}`"))),
            };
            let xi = TerminalCondition::constant(s1.iter().map(|x| amplitude * x).collect());
            let res = run_linear_case(&space, &variant, &xi, &ens, &cfg)?;
            let tol = doc.positive("tolerance", Some(0.02))?;
            let err = if amplitude != 0.0 {
                res.mode_error(&space, 1)
            } else {
                res.relative_error
            };
            writeln!(props, "{},mode1_relative_error,{}", cfg.epsilon, tol - err).unwrap();
            writeln!(
                props,
                "{},l2_relative_error,{}",
                cfg.epsilon,
                tol - res.relative_error
            )
            .unwrap();
            let passed = err <= tol && res.relative_error <= tol;
            let summary = format!(
                "{case}: mode-1 error {err:.3e}, L2 error {:.3e}",
                res.relative_error
            );
            (res.solution, passed, summary)
        }
        "obstacle" => {
            let density: Phi = match doc.str_or("density", "nonnegative") {
                "nonnegative" => Arc::new(BoxIndicator::nonnegative(1)),
                "zero" => Arc::new(Zero::new(1)),
                "abs" => Arc::new(AbsValue::new(1, 1.0)?),
                other => return Err(Error::config(format!("unknown density `{other}`"))),
            };
            let phi = build_obstacle_phi(space, density)?;
            let shape = s1.clone();
            let xi = match doc.str_or("terminal", "positive_part") {
                "positive_part" => TerminalCondition::pointwise("obstacle", d, move |m| {
                    m.iter()
                        .zip(&shape)
                        .map(|(a, b)| (amplitude * b + a).max(0.0))
                        .collect()
                }),
                "affine" => TerminalCondition::pointwise("affine", d, move |m| {
                    m.iter()
                        .zip(&shape)
                        .map(|(a, b)| amplitude * b + a)
                        .collect()
                }),
                other => return Err(Error::config(format!("unknown terminal `{other}`"))),
            };
            let f = Generator::constant(vec![doc.get_or("forcing", 0.0)?; d]);
            let schedule: Vec<f64> = if doc.has("schedule") {
                doc.list("schedule")?
            } else {
                vec![0.04, 0.02, 0.01, 0.005]
            };
            let cfg = build_solver(&doc_solver, schedule[0], lambda)?;
            let run = run_bspde_obstacle(&phi, &f, &xi, &ens, &cfg, &schedule)?;
            for p in &run.properties {
                for (name, s) in p.slacks() {
                    writeln!(props, "{},{name},{}", p.epsilon, s + 0.0).unwrap();
                }
                writeln!(props, "{},max_energy,{}", p.epsilon, p.max_energy).unwrap();
                writeln!(
                    props,
                    "{},max_laplacian_norm,{}",
                    p.epsilon, p.max_laplacian_norm
                )
                .unwrap();
            }
            let passed = run.holds(BSPDE_SLACK_TOL);
            let worst = run
                .properties
                .iter()
                .flat_map(|p| p.slacks().map(|(_, s)| s))
                .fold(f64::INFINITY, f64::min);
            (
                run.limit.limit,
                passed,
                format!("obstacle: worst slack {worst:e}"),
            )
        }
        other => return Err(Error::config(format!("unknown case `{other}`"))),
    };
    let mut means = String::from("t,x,mean_Y\n");
    let nodes = space.nodes();
    for i in 0..=sol.n_steps() {
        let t = sol.grid.node(i);
        let slice = sol.y_slice(i);
        for (k, x) in nodes.iter().enumerate() {
            let col: Vec<f64> = (0..sol.n_paths).map(|p| slice[p * d + k]).collect();
            let m = crate::stats::pairwise_sum(&col) / sol.n_paths as f64;
            writeln!(means, "{t},{x},{m}").unwrap();
        }
    }
    let files = vec![
        write_csv(out, "bspde_means.csv", &means)?,
        write_csv(out, "bspde_properties.csv", &props)?,
    ];
    Ok(Outcome {
        passed,
        files,
        summary,
    })
}
