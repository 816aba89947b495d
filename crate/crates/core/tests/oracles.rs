use bsvi::bspde::{heat_operator, run_linear_case, GalerkinSpace, LinearVariant};
use bsvi::convex::{BoxIndicator, Quadratic, Zero};
use bsvi::diagnostics::{a_priori_report, cauchy_estimate, pair_distance, tree_oracle_1d, RunSpec};
use bsvi::generator::{Generator, TerminalCondition};
use bsvi::sim::{simulate_ensemble, CovarianceSpec, TimeGrid};
use bsvi::solver::{solve_penalized, SolverConfig, ZEstimator};
use bsvi::stats::mean_se;
use nalgebra::DMatrix;

#[test]
fn tree_and_regression_agree_on_polynomial_terminal() {
    let q = 0.8;
    let cov = CovarianceSpec::constant(DMatrix::from_element(1, 1, q)).unwrap();
    let grid = TimeGrid::new(1.0, 32).unwrap();
    let ens = simulate_ensemble(&cov, &grid, 20_000, 21).unwrap();
    let cfg = SolverConfig::default();
    for (k, g) in [
        (2, (|m: f64| m * m) as fn(f64) -> f64),
        (3, |m: f64| m * m * m + m),
    ] {
        let xi = TerminalCondition::pointwise("poly", 1, move |m| vec![g(m[0])]);
        let cfg = SolverConfig {
            degree: k,
            ..cfg.clone()
        };
        let sol = solve_penalized(&Zero::new(1), &Generator::zero(), &xi, &ens, &cfg).unwrap();
        let tree =
            tree_oracle_1d(&Zero::new(1), &Generator::zero(), g, 1.0, q, 1 << 10, &cfg).unwrap();
        let err = (sol.y0[0] - tree).abs();
        assert!(
            err <= 3.0 * sol.y0_std_err[0],
            "degree {k}: {} vs {tree}",
            sol.y0[0]
        );
    }
}

#[test]
fn a_priori_ratio_is_seed_stable() {
    let phi = BoxIndicator::nonnegative(1);
    let f = Generator::constant(vec![-1.0]);
    let xi = TerminalCondition::positive_part(vec![0.0], 1.0);
    let cov = CovarianceSpec::identity(1).unwrap();
    let grid = TimeGrid::new(1.0, 32).unwrap();
    let cfg = SolverConfig {
        epsilon: 0.05,
        ..SolverConfig::default()
    };
    let ratios: Vec<f64> = (0..5)
        .map(|s| {
            let ens = simulate_ensemble(&cov, &grid, 4_000, 300 + s).unwrap();
            let sol = solve_penalized(&phi, &f, &xi, &ens, &cfg).unwrap();
            let r = a_priori_report(&sol, &f, cfg.lambda);
            assert!(r.lhs.is_finite() && r.gamma_term > 0.0);
            r.ratio
        })
        .collect();
    let m = mean_se(&ratios).mean;
    let spread = ratios.iter().fold(0.0f64, |a, r| a.max((r - m).abs())) / m;
    assert!(spread <= 0.2, "{ratios:?}");
}

#[test]
fn quadratic_cauchy_rate() {
    let phi = Quadratic::new(1, 1.0).unwrap();
    let cov = CovarianceSpec::identity(1).unwrap();
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let ens = simulate_ensemble(&cov, &grid, 4_000, 31).unwrap();
    let xi = TerminalCondition::affine(vec![1.0], 1.0);
    let rep = cauchy_estimate(
        &phi,
        &Generator::zero(),
        &xi,
        &ens,
        &[0.2, 0.1, 0.05, 0.025],
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(rep.sup.slope >= 0.8, "{:?}", rep.sup);
    assert!(rep.integral.slope >= 0.8, "{:?}", rep.integral);
    assert!(rep.gamma > 0.0 && rep.gamma_weighted >= rep.gamma);
}

#[test]
fn extra_basis_terms_stay_within_seed_noise() {
    let cov = CovarianceSpec::identity(1).unwrap();
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let eval = simulate_ensemble(&cov, &grid, 4_000, 77).unwrap();
    let xi = TerminalCondition::power(1, 2);
    let cfg = SolverConfig::default();
    let zero = Zero::new(1);
    let f = Generator::zero();
    let seed_noise: Vec<f64> = (0..8)
        .map(|r| {
            let runs = (
                RunSpec {
                    seed: 2 * r,
                    degree: 2,
                },
                RunSpec {
                    seed: 2 * r + 1,
                    degree: 2,
                },
            );
            pair_distance(&zero, &f, &xi, &cov, &eval, 4_000, runs, &cfg)
                .unwrap()
                .integral
        })
        .collect();
    let runs = (
        RunSpec { seed: 0, degree: 2 },
        RunSpec { seed: 0, degree: 3 },
    );
    let basis = pair_distance(&zero, &f, &xi, &cov, &eval, 4_000, runs, &cfg)
        .unwrap()
        .integral;
    let noise = mean_se(&seed_noise);
    let sd = noise.std_err * (seed_noise.len() as f64).sqrt();
    assert!(basis <= noise.mean + 3.0 * sd, "{basis} vs {noise:?}");
}

fn heat_mode(n_grid: usize, n_steps: usize) -> f64 {
    let space = GalerkinSpace::new(n_grid).unwrap();
    let cov = space.sine_covariance(1.0, 2.0).unwrap();
    let grid = TimeGrid::new(0.05, n_steps).unwrap();
    let ens = simulate_ensemble(&cov, &grid, 500, 5).unwrap();
    let cfg = SolverConfig {
        epsilon: 1.0,
        degree: 1,
        z_estimator: ZEstimator::Empirical,
        ..SolverConfig::default()
    };
    let xi = TerminalCondition::constant(space.sine(1));
    let res = run_linear_case(
        &space,
        &LinearVariant::OperatorOnY(heat_operator(&space)),
        &xi,
        &ens,
        &cfg,
    )
    .unwrap();
    assert!(res.mode_error(&space, 1) < 0.02);
    space.mode_coefficient(&res.y0, 1)
}

#[test]
fn heat_mode_is_mesh_stable() {
    // Explicit stepping of the stiff operator needs Δt·μ_max < 2.
    let coarse = heat_mode(16, 64);
    let fine = heat_mode(32, 128);
    assert!((coarse - fine).abs() / fine <= 0.02, "{coarse} vs {fine}");
}

#[test]
fn linear_case_closed_forms() {
    let space = GalerkinSpace::new(4).unwrap();
    let cov = space.sine_covariance(0.5, 2.0).unwrap();
    let grid = TimeGrid::new(0.5, 32).unwrap();
    let ens = simulate_ensemble(&cov, &grid, 2_000, 8).unwrap();
    let cfg = SolverConfig {
        epsilon: 1.0,
        degree: 1,
        ..SolverConfig::default()
    };
    let c = vec![1.0, -2.0, 0.5, 3.0];
    let xi = TerminalCondition::constant(c.clone());

    let zero = LinearVariant::OperatorOnY(DMatrix::zeros(4, 4));
    let r = run_linear_case(&space, &zero, &xi, &ens, &cfg).unwrap();
    assert_eq!(r.y0, c);

    let diag = [-1.0, 0.5, 0.0, -0.3];
    let a = DMatrix::from_fn(4, 4, |i, j| if i == j { diag[i] } else { 0.0 });
    let r = run_linear_case(&space, &LinearVariant::OperatorOnY(a), &xi, &ens, &cfg).unwrap();
    for k in 0..4 {
        let exact = c[k] * (diag[k] * 0.5).exp();
        assert!((r.reference[k] - exact).abs() < 1e-12);
        assert!(
            (r.y0[k] - exact).abs() < 0.01 * exact.abs(),
            "{k}: {} vs {exact}",
            r.y0[k]
        );
    }

    let forcing = LinearVariant::ConstantForcing(vec![2.0; 4]);
    let r = run_linear_case(&space, &forcing, &xi, &ens, &cfg).unwrap();
    for (y, ck) in r.y0.iter().zip(&c) {
        assert!((y - (ck + 1.0)).abs() < 1e-12);
    }
}
