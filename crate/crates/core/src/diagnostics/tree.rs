use nalgebra::DMatrix;

use crate::convex::ConvexFunction;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::solver::{implicit_step, SolverConfig};

pub const MAX_TREE_STEPS: usize = 1 << 14;

/// Root value of the penalized equation on a recombining binomial tree for
/// `M = √q·W` in one dimension, with `ξ = g(M(T))`.
///
/// Conditional expectations are exact on the tree. The generator is explicit
/// and the penalty goes through the same implicit step as the Monte Carlo
/// solver, so the only difference between the two is the estimation of
/// `E_i[·]` and `Z`.
pub fn tree_oracle_1d(
    phi: &dyn ConvexFunction,
    f: &Generator,
    g: impl Fn(f64) -> f64,
    horizon: f64,
    q: f64,
    n_steps: usize,
    cfg: &SolverConfig,
) -> Result<f64> {
    if phi.dim() != 1 {
        return Err(Error::usage("tree oracle is one-dimensional"));
    }
    if n_steps == 0 || n_steps > MAX_TREE_STEPS {
        return Err(Error::usage(format!(
            "tree steps must lie in 1..={MAX_TREE_STEPS}, got {n_steps}"
        )));
    }
    if !(horizon > 0.0 && q > 0.0 && horizon.is_finite() && q.is_finite()) {
        return Err(Error::config(
            "tree oracle needs positive horizon and variance",
        ));
    }
    let dt = horizon / n_steps as f64;
    let sigma = q.sqrt();
    let h = sigma * dt.sqrt();
    let mut y: Vec<f64> = (0..=n_steps)
        .map(|j| g((2.0 * j as f64 - n_steps as f64) * h))
        .collect();
    if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::config(format!(
            "terminal function is not finite at node {bad}"
        )));
    }
    let mut zq = DMatrix::zeros(1, 1);
    let (mut out, mut v, mut u) = ([0.0], [0.0], [0.0]);
    for i in (0..n_steps).rev() {
        let t = i as f64 * dt;
        for j in 0..=i {
            let (down, up) = (y[j], y[j + 1]);
            let e = 0.5 * (up + down);
            zq[(0, 0)] = (up - down) / (2.0 * h) * sigma;
            let r = e + f.eval_checked(t, &[e], &zq)?[0] * dt;
            implicit_step(phi, cfg, dt, &[r], &mut out, &mut v, &mut u)?;
            y[j] = out[0];
        }
    }
    Ok(y[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{BoxIndicator, Zero};

    fn cfg(eps: f64) -> SolverConfig {
        SolverConfig {
            epsilon: eps,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn martingale_mean() {
        let y = tree_oracle_1d(
            &Zero::new(1),
            &Generator::zero(),
            |m| m,
            1.0,
            2.0,
            64,
            &cfg(0.1),
        )
        .unwrap();
        assert!(y.abs() < 1e-12);
    }

    #[test]
    fn quadratic_variation() {
        let (q, t) = (1.5, 0.8);
        let y = tree_oracle_1d(
            &Zero::new(1),
            &Generator::zero(),
            |m| m * m,
            t,
            q,
            1 << 12,
            &cfg(0.1),
        )
        .unwrap();
        assert!((y - q * t).abs() < 1e-3 * q * t, "{y}");
    }

    #[test]
    fn linear_driver_matches_exponential() {
        let f = Generator::linear(0.5, 0.0, vec![0.0], vec![0.0]).unwrap();
        let y = tree_oracle_1d(&Zero::new(1), &f, |_| 2.0, 1.0, 1.0, 1 << 12, &cfg(0.1)).unwrap();
        // Explicit Euler: (1 + aΔt)^N.
        let expected = 2.0 * (1.0 + 0.5 / 4096.0f64).powi(4096);
        assert!((y - expected).abs() < 1e-10);
        assert!((y - 2.0 * 0.5f64.exp()).abs() < 1e-3);
    }

    #[test]
    fn reflection_pushes_value_up() {
        let free = tree_oracle_1d(
            &Zero::new(1),
            &Generator::zero(),
            |m| m,
            1.0,
            1.0,
            512,
            &cfg(0.05),
        )
        .unwrap();
        let refl = tree_oracle_1d(
            &BoxIndicator::nonnegative(1),
            &Generator::zero(),
            |m| m,
            1.0,
            1.0,
            512,
            &cfg(0.05),
        )
        .unwrap();
        assert!(refl > free + 0.1, "{refl} vs {free}");
    }

    #[test]
    fn step_limit() {
        let err = tree_oracle_1d(
            &Zero::new(1),
            &Generator::zero(),
            |m| m,
            1.0,
            1.0,
            MAX_TREE_STEPS + 1,
            &cfg(0.1),
        );
        assert!(matches!(err, Err(Error::Usage(_))));
    }
}
