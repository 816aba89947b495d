//! Proper lower-semicontinuous convex functions and their Moreau-Yosida
//! regularization.
//!
//! Scaling convention used throughout the crate:
//!
//! ```text
//! φ_ε(u)  = inf_v { ½|u − v|² + ε φ(v) }
//! J_ε u   = argmin of the above           (resolvent (I + ε∂φ)⁻¹)
//! Dφ_ε(u) = u − J_ε u                      (gradient of φ_ε)
//! ```
//!
//! so the penalization force is `(1/ε) Dφ_ε(u)`, which lies in `∂φ(J_ε u)`.

mod catalog;
mod checks;
mod numeric;
mod separable;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use catalog::{
    AbsValue, BallIndicator, BoxIndicator, HalfspaceIndicator, PositivePartPower, Quadratic, Zero,
};
pub use checks::{
    check_barbu_properties, check_cross_monotonicity, projection_gap, sample_box, PropertyReport,
};
pub use numeric::{prox_1d_numeric, NumericScalar, NUMERIC_PROX_TOL};
pub use separable::{separable_lift, Separable};

/// How a function's resolvent is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxKind {
    ClosedForm,
    Numeric1d,
    Separable,
    CompositeVi,
}

/// A proper, l.s.c. convex function on `R^d` with `φ ≥ φ(0) = 0`.
///
/// Implementations must be pure: the solver calls `prox_into` concurrently
/// from many threads.
pub trait ConvexFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn name(&self) -> String;

    fn prox_kind(&self) -> ProxKind;

    /// `φ(u)`, returning `f64::INFINITY` outside the domain. `u.len()` is
    /// assumed to equal `dim()`.
    fn value(&self, u: &[f64]) -> f64;

    /// Writes `J_ε u` into `out`.
    fn prox_into(&self, eps: f64, u: &[f64], out: &mut [f64]) -> Result<()>;

    /// `φ_ε(u)` from an independent closed form, when one is known.
    fn envelope_closed_form(&self, _eps: f64, _u: &[f64]) -> Option<f64> {
        None
    }

    /// Projection onto the closure of the domain, when available.
    fn project_domain(&self, _u: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Shared handle used by the solver and CLI.
pub type Phi = Arc<dyn ConvexFunction>;

/// Resolvent, Yosida gradient, and Moreau envelope at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct YosidaResult {
    pub resolvent_point: Vec<f64>,
    pub gradient: Vec<f64>,
    pub envelope_value: f64,
    pub epsilon: f64,
}

impl YosidaResult {
    /// The penalization force `(1/ε) Dφ_ε(u)`.
    pub fn force(&self) -> Vec<f64> {
        self.gradient.iter().map(|g| g / self.epsilon).collect()
    }
}

fn check_dim(phi: &dyn ConvexFunction, u: &[f64]) -> Result<()> {
    if u.len() != phi.dim() {
        return Err(Error::usage(format!(
            "point has length {} but {} has dimension {}",
            u.len(),
            phi.name(),
            phi.dim()
        )));
    }
    Ok(())
}

/// `φ(u)` with a dimension check.
pub fn evaluate(phi: &dyn ConvexFunction, u: &[f64]) -> Result<f64> {
    check_dim(phi, u)?;
    Ok(phi.value(u))
}

/// Computes `J_ε u`, `Dφ_ε(u)` and `φ_ε(u)`.
pub fn resolvent(phi: &dyn ConvexFunction, eps: f64, u: &[f64]) -> Result<YosidaResult> {
    check_dim(phi, u)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::usage("epsilon must be positive"));
    }
    let mut j = vec![0.0; u.len()];
    phi.prox_into(eps, u, &mut j)?;
    let gradient: Vec<f64> = u.iter().zip(&j).map(|(a, b)| a - b).collect();
    let envelope_value = match phi.envelope_closed_form(eps, u) {
        Some(v) => v,
        None => 0.5 * norm_sq(&gradient) + eps * phi.value(&j),
    };
    Ok(YosidaResult {
        resolvent_point: j,
        gradient,
        envelope_value,
        epsilon: eps,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_catalog_examples() {
        let zero = Zero::new(2);
        assert_eq!(evaluate(&zero, &[3.0, -1.0]).unwrap(), 0.0);

        let nonneg = BoxIndicator::nonnegative(1);
        assert_eq!(evaluate(&nonneg, &[-1.0]).unwrap(), f64::INFINITY);

        let quad = Quadratic::new(1, 1.0).unwrap();
        assert_eq!(evaluate(&quad, &[2.0]).unwrap(), 2.0);
    }

    #[test]
    fn evaluate_rejects_dimension_mismatch() {
        let zero = Zero::new(2);
        assert!(matches!(evaluate(&zero, &[1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn resolvent_of_zero_is_identity() {
        let r = resolvent(&Zero::new(1), 0.5, &[7.0]).unwrap();
        assert_eq!(r.resolvent_point, vec![7.0]);
        assert_eq!(r.gradient, vec![0.0]);
        assert_eq!(r.envelope_value, 0.0);
    }

    #[test]
    fn resolvent_of_nonnegative_indicator_projects() {
        for eps in [0.01, 1.0, 10.0] {
            let r = resolvent(&BoxIndicator::nonnegative(1), eps, &[-3.0]).unwrap();
            assert_eq!(r.resolvent_point, vec![0.0]);
            assert_eq!(r.gradient, vec![-3.0]);
            assert_eq!(r.envelope_value, 4.5);
        }
    }

    #[test]
    fn resolvent_rejects_nonpositive_epsilon() {
        assert!(resolvent(&Zero::new(1), 0.0, &[1.0]).is_err());
        assert!(resolvent(&Zero::new(1), -1.0, &[1.0]).is_err());
    }

    #[test]
    fn force_lies_in_subdifferential_of_quadratic() {
        let c = 2.0;
        let q = Quadratic::new(1, c).unwrap();
        let r = resolvent(&q, 0.3, &[4.0]).unwrap();
        // ∂φ(v) = {c v} for the quadratic.
        assert!((r.force()[0] - c * r.resolvent_point[0]).abs() < 1e-12);
    }
}
