use std::sync::Arc;

use super::*;
use crate::convex::{resolvent, BoxIndicator, ConvexFunction, Quadratic, Zero};
use crate::error::Error;
use crate::generator::{Generator, TerminalCondition};
use crate::sim::{simulate_ensemble, CovarianceSpec, MartingaleEnsemble, TimeGrid};

fn brownian(n_steps: usize, n_paths: usize, seed: u64) -> MartingaleEnsemble {
    let cov = CovarianceSpec::identity(1).unwrap();
    let grid = TimeGrid::new(1.0, n_steps).unwrap();
    simulate_ensemble(&cov, &grid, n_paths, seed).unwrap()
}

fn cfg(eps: f64, degree: usize) -> SolverConfig {
    SolverConfig {
        epsilon: eps,
        degree,
        ..SolverConfig::default()
    }
}

#[test]
fn constant_terminal_is_a_fixed_point() {
    let ens = brownian(16, 2000, 1);
    let xi = TerminalCondition::constant(vec![1.5]);
    let sol = solve_penalized(&Zero::new(1), &Generator::zero(), &xi, &ens, &cfg(0.1, 2)).unwrap();
    for i in 0..16 {
        for p in (0..2000).step_by(97) {
            assert!((sol.y(i, p)[0] - 1.5).abs() < 1e-12);
            assert_eq!(sol.u(i, p)[0], 0.0);
            assert!(sol.z(i, p)[(0, 0)].abs() < 1e-10);
            assert!(sol.n_residual(i, p)[0].abs() < 1e-12);
        }
    }
    let orth = orthogonality_report(&sol, &ens).unwrap();
    assert!(orth.residual_energy < 1e-20);
    assert!(orth.cross[(0, 0)].abs() < 1e-12);
}

#[test]
fn terminal_value_has_unit_z() {
    let ens = brownian(16, 10_000, 2);
    let xi = TerminalCondition::terminal_value(1);
    let sol = solve_penalized(&Zero::new(1), &Generator::zero(), &xi, &ens, &cfg(0.1, 1)).unwrap();
    for i in 0..16 {
        for p in (0..10_000).step_by(500) {
            assert!((sol.z(i, p)[(0, 0)] - 1.0).abs() < 0.05, "step {i}");
        }
    }
    // The theoretical normalization carries the sampling error of the bracket.
    let theo = SolverConfig {
        z_estimator: ZEstimator::Theoretical,
        ..cfg(0.1, 1)
    };
    let sol = solve_penalized(&Zero::new(1), &Generator::zero(), &xi, &ens, &theo).unwrap();
    let mean_z: f64 = (0..16).map(|i| sol.z(i, 0)[(0, 0)]).sum::<f64>() / 16.0;
    assert!((mean_z - 1.0).abs() < 0.05, "{mean_z}");
    assert!(sol.y0[0].abs() < 3.0 * sol.y0_std_err[0] + 1e-12);
    for p in 0..10 {
        assert_eq!(sol.y(16, p)[0], ens.terminal(p)[0]);
    }
}

#[test]
fn linear_driver_matches_exponential() {
    let ens = brownian(64, 10_000, 3);
    let (a, c) = (0.5, 2.0);
    let f = Generator::linear(a, 0.0, vec![0.0], vec![0.0]).unwrap();
    let xi = TerminalCondition::constant(vec![c]);
    let sol = solve_penalized(&Zero::new(1), &f, &xi, &ens, &cfg(0.1, 2)).unwrap();
    let exact = c * a.exp();
    assert!(
        (sol.y0[0] - exact).abs() <= 0.01 * exact,
        "{} vs {exact}",
        sol.y0[0]
    );
}

#[test]
fn zero_penalty_is_independent_of_epsilon() {
    let ens = brownian(16, 3000, 4);
    let xi = TerminalCondition::positive_part(vec![0.2], 1.0);
    let f = Generator::sine(vec![0.5]);
    let a = solve_penalized(&Zero::new(1), &f, &xi, &ens, &cfg(0.1, 2)).unwrap();
    let b = solve_penalized(&Zero::new(1), &f, &xi, &ens, &cfg(0.07, 2)).unwrap();
    for i in 0..=16 {
        assert_eq!(a.y_slice(i), b.y_slice(i));
    }
}

#[test]
fn fixed_point_matches_closed_form() {
    let ens = brownian(32, 2000, 5);
    let xi = TerminalCondition::terminal_value(1);
    let phi = BoxIndicator::nonnegative(1);
    let f = Generator::constant(vec![-0.5]);
    let closed = solve_penalized(&phi, &f, &xi, &ens, &cfg(0.05, 2)).unwrap();
    let fp_cfg = SolverConfig {
        implicit: ImplicitStep::FixedPoint,
        ..cfg(0.05, 2)
    };
    let fixed = solve_penalized(&phi, &f, &xi, &ens, &fp_cfg).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..=32 {
        for (a, b) in closed.y_slice(i).iter().zip(fixed.y_slice(i)) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst < 1e-9, "max difference {worst}");
    for d in &fixed.diagnostics {
        assert!(d.implicit_residual <= 10.0 * fp_cfg.inner_tol);
    }
    assert!(fixed.diagnostics.iter().any(|d| d.inner_iterations > 1));
}

#[test]
fn fixed_point_cap_is_a_numeric_error() {
    let ens = brownian(8, 100, 6);
    let xi = TerminalCondition::terminal_value(1);
    let c = SolverConfig {
        implicit: ImplicitStep::FixedPoint,
        inner_iterations: 2,
        ..cfg(0.2, 1)
    };
    let phi = Quadratic::new(1, 1.0).unwrap();
    let err = solve_penalized(&phi, &Generator::zero(), &xi, &ens, &c).unwrap_err();
    assert!(matches!(err, Error::Numeric { .. }));
}

#[test]
fn cfl_violation_is_rejected() {
    let ens = brownian(4, 10, 7);
    let xi = TerminalCondition::constant(vec![1.0]);
    let err =
        solve_penalized(&Zero::new(1), &Generator::zero(), &xi, &ens, &cfg(0.1, 1)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn force_is_a_subgradient_at_the_resolvent() {
    let ens = brownian(32, 1000, 8);
    let xi = TerminalCondition::terminal_value(1);
    let phi = BoxIndicator::nonnegative(1);
    let sol = solve_penalized(&phi, &Generator::zero(), &xi, &ens, &cfg(0.05, 2)).unwrap();
    let mut worst = f64::INFINITY;
    for i in 0..32 {
        for p in 0..1000 {
            let j = sol.resolvent(i, p)[0];
            let u = sol.u(i, p)[0];
            // The recorded resolvent is J_ε of the recorded Y.
            let direct = resolvent(&phi, 0.05, sol.y(i, p)).unwrap();
            assert!((direct.resolvent_point[0] - j).abs() < 1e-12);
            for v in [0.0, 0.5, 1.0, 2.0] {
                worst = worst.min(phi.value(&[v]) - phi.value(&[j]) - u * (v - j));
            }
        }
    }
    assert!(worst >= -1e-12, "{worst}");
}

#[test]
fn quadratic_penalty_limit_shifts_the_drift() {
    let ens = brownian(200, 2000, 9);
    let (kappa, c) = (1.0, 1.0);
    let phi = Quadratic::new(1, kappa).unwrap();
    let xi = TerminalCondition::constant(vec![c]);
    let sol = solve_penalized(&phi, &Generator::zero(), &xi, &ens, &cfg(0.005, 1)).unwrap();
    let exact = c * (-kappa).exp();
    assert!(
        (sol.y0[0] - exact).abs() < 0.01 * exact,
        "{} vs {exact}",
        sol.y0[0]
    );
}

#[test]
fn solutions_are_thread_count_independent() {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let ens = brownian(16, 3000, 10);
                let xi = TerminalCondition::positive_part(vec![0.0], 1.0);
                let f = Generator::sine(vec![1.0]);
                solve_penalized(&BoxIndicator::nonnegative(1), &f, &xi, &ens, &cfg(0.1, 3)).unwrap()
            })
    };
    let a = run(1);
    let b = run(6);
    for i in 0..=16 {
        assert_eq!(a.y_slice(i), b.y_slice(i));
    }
    assert_eq!(a.y0, b.y0);
}

#[test]
fn replay_on_the_fitting_ensemble_reproduces_the_solution() {
    let ens = brownian(16, 2000, 11);
    let xi = TerminalCondition::terminal_value(1);
    let phi = BoxIndicator::nonnegative(1);
    let c = cfg(0.1, 2);
    let sol = solve_penalized(&phi, &Generator::zero(), &xi, &ens, &c).unwrap();
    let again = replay_penalized(&sol, &phi, &Generator::zero(), &xi, &ens, &c).unwrap();
    for i in 0..=16 {
        assert_eq!(sol.y_slice(i), again.y_slice(i));
    }
}

#[test]
fn orthogonality_for_terminal_value() {
    let ens = brownian(16, 10_000, 12);
    let xi = TerminalCondition::terminal_value(1);
    let sol = solve_penalized(&Zero::new(1), &Generator::zero(), &xi, &ens, &cfg(0.1, 1)).unwrap();
    let r = orthogonality_report(&sol, &ens).unwrap();
    // The ridge shrinks the fit by O(δ), so exact in-sample orthogonality is off by about δ.
    assert!(
        r.cross[(0, 0)].abs() <= 3.0 * r.cross_std_err[(0, 0)] + 1e-6,
        "{r:?}"
    );
}

#[test]
fn residual_energy_drops_with_basis_degree() {
    let ens = brownian(16, 5000, 13);
    let xi = TerminalCondition::power(1, 3);
    let energies: Vec<f64> = (1..=3)
        .map(|deg| {
            let sol = solve_penalized(&Zero::new(1), &Generator::zero(), &xi, &ens, &cfg(0.1, deg))
                .unwrap();
            orthogonality_report(&sol, &ens).unwrap().residual_energy
        })
        .collect();
    assert!(energies[0] > 0.0);
    assert!(
        energies[1] < energies[0] && energies[2] < energies[1],
        "{energies:?}"
    );
}

#[test]
fn limit_trace_of_zero_penalty_is_flat() {
    let ens = brownian(16, 1000, 14);
    let xi = TerminalCondition::terminal_value(1);
    let r = solve_limit(
        &Zero::new(1),
        &Generator::zero(),
        &xi,
        &ens,
        &[0.2, 0.1, 0.0625],
        &cfg(0.1, 1),
        1e-12,
    )
    .unwrap();
    assert_eq!(r.trace.len(), 2);
    assert!(r.trace.iter().all(|t| t.distance.sup == 0.0));
    assert!(r.converged);
    assert_eq!(r.limit.epsilon, 0.0625);
}

#[test]
fn schedule_validation() {
    assert!(validate_schedule(&[0.1]).is_err());
    assert!(validate_schedule(&[0.1, 0.2]).is_err());
    assert!(validate_schedule(&[0.1, -0.05]).is_err());
    assert!(validate_schedule(&[0.2, 0.1]).is_ok());
}

#[test]
fn solution_dump_layout() {
    let ens = brownian(4, 3, 15);
    let xi = TerminalCondition::terminal_value(1);
    let phi: Arc<dyn ConvexFunction> = Arc::new(Zero::new(1));
    let sol = solve_penalized(phi.as_ref(), &Generator::zero(), &xi, &ens, &cfg(0.5, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("sol.bin");
    sol.write_to(&f).unwrap();
    let bytes = std::fs::read(&f).unwrap();
    assert_eq!(&bytes[..8], b"BSVISOL1");
    let (n, np) = (4, 3);
    let expected = 8 + 32 + 8 + 8 * ((n + 1) * np + n * np + n * np + n * np);
    assert_eq!(bytes.len(), expected);
}
