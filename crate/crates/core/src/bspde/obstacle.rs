use std::sync::Arc;

use crate::convex::{ConvexFunction, Phi, ProxKind};
use crate::error::{Error, Result};

use super::space::GalerkinSpace;

pub const GS_TOL: f64 = 1e-12;
pub const GS_MAX_SWEEPS: usize = 10_000;

/// `φ(v) = ½ w vᵀKv + Σ_k j(v_k)` on the nodal vector of a [`GalerkinSpace`].
///
/// This is the discrete `½∫|∇u|² + ∫ j(u)` divided by `h`, so that its
/// Euclidean resolvent coincides with the `L²(D)` resolvent of the
/// continuous functional. `w` is the stiffness weight (1 for the model
/// problem, 0 to switch the gradient term off).
#[derive(Debug, Clone)]
pub struct CompositeObstacle {
    space: GalerkinSpace,
    j: Phi,
    weight: f64,
    tol: f64,
    max_sweeps: usize,
}

/// Builds the composite functional for a scalar `j` with `j ≥ j(0) = 0`.
pub fn build_obstacle_phi(space: GalerkinSpace, j: Phi) -> Result<CompositeObstacle> {
    if j.dim() != 1 {
        return Err(Error::usage(format!(
            "obstacle density {} is not scalar",
            j.name()
        )));
    }
    Ok(CompositeObstacle {
        space,
        j,
        weight: 1.0,
        tol: GS_TOL,
        max_sweeps: GS_MAX_SWEEPS,
    })
}

impl CompositeObstacle {
    pub fn with_stiffness_weight(mut self, w: f64) -> Result<Self> {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::config("stiffness weight must be nonnegative"));
        }
        self.weight = w;
        Ok(self)
    }

    pub fn with_tolerance(mut self, tol: f64, max_sweeps: usize) -> Result<Self> {
        if !(tol > 0.0) || max_sweeps == 0 {
            return Err(Error::config("sweep tolerance and cap must be positive"));
        }
        self.tol = tol;
        self.max_sweeps = max_sweeps;
        Ok(self)
    }

    pub fn space(&self) -> &GalerkinSpace {
        &self.space
    }

    pub fn density(&self) -> &Phi {
        &self.j
    }

    pub fn stiffness_weight(&self) -> f64 {
        self.weight
    }

    pub fn into_phi(self) -> Phi {
        Arc::new(self)
    }

    /// `v − u + ε w K v`, the gradient of the smooth part of the prox
    /// objective at `v`.
    pub fn smooth_residual(&self, eps: f64, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut kv = vec![0.0; v.len()];
        self.space.apply_stiffness(v, &mut kv);
        (0..v.len())
            .map(|k| v[k] - u[k] + eps * self.weight * kv[k])
            .collect()
    }

    /// Splits `U ∈ ∂φ(v)` into its density part `U − wKv`, which lies in
    /// `∂j(v_k)` nodewise.
    pub fn density_part(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut kv = vec![0.0; v.len()];
        self.space.apply_stiffness(v, &mut kv);
        (0..v.len()).map(|k| u[k] - self.weight * kv[k]).collect()
    }
}

impl ConvexFunction for CompositeObstacle {
    fn dim(&self) -> usize {
        self.space.n_grid()
    }

    fn name(&self) -> String {
        format!("dirichlet+{}", self.j.name())
    }

    fn prox_kind(&self) -> ProxKind {
        ProxKind::CompositeVi
    }

    fn value(&self, u: &[f64]) -> f64 {
        let mut total = 0.0;
        for x in u {
            let v = self.j.value(std::slice::from_ref(x));
            if v == f64::INFINITY {
                return f64::INFINITY;
            }
            total += v;
        }
        total + self.weight * self.space.energy(u) / self.space.h()
    }

    /// Exact coordinate minimization (proximal Gauss-Seidel).
    fn prox_into(&self, eps: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        let n = u.len();
        let s = eps * self.weight / (self.space.h() * self.space.h());
        let a = 1.0 + 2.0 * s;
        out.copy_from_slice(u);
        let mut change = f64::INFINITY;
        for _ in 0..self.max_sweeps {
            change = 0.0;
            let mut size: f64 = 0.0;
            for k in 0..n {
                let left = if k > 0 { out[k - 1] } else { 0.0 };
                let right = if k + 1 < n { out[k + 1] } else { 0.0 };
                let b = (u[k] + s * (left + right)) / a;
                let mut next = 0.0;
                self.j.prox_into(
                    eps / a,
                    std::slice::from_ref(&b),
                    std::slice::from_mut(&mut next),
                )?;
                change = change.max((next - out[k]).abs());
                size = size.max(next.abs());
                out[k] = next;
            }
            if change <= self.tol * (1.0 + size) {
                return Ok(());
            }
        }
        Err(Error::numeric(
            format!(
                "Gauss-Seidel resolvent of {} did not converge in {} sweeps",
                self.name(),
                self.max_sweeps
            ),
            change,
        ))
    }

    fn project_domain(&self, u: &[f64]) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(u.len());
        for x in u {
            out.push(self.j.project_domain(std::slice::from_ref(x))?[0]);
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{
        check_barbu_properties, check_cross_monotonicity, sample_box, BoxIndicator, Zero,
    };
    use nalgebra::{DMatrix, DVector};

    fn indicator(space: GalerkinSpace) -> CompositeObstacle {
        build_obstacle_phi(space, Arc::new(BoxIndicator::nonnegative(1))).unwrap()
    }

    #[test]
    fn sine_mode_resolvent() {
        let sp = GalerkinSpace::new(16).unwrap();
        let phi = build_obstacle_phi(sp, Arc::new(Zero::new(1))).unwrap();
        let eps = 0.01;
        for k in [1, 3, 8] {
            let s = sp.sine(k);
            let mut out = vec![0.0; 16];
            phi.prox_into(eps, &s, &mut out).unwrap();
            let f = 1.0 / (1.0 + eps * sp.eigenvalue(k));
            for (o, x) in out.iter().zip(&s) {
                assert!((o - f * x).abs() < 1e-8);
            }
        }
        let u: Vec<f64> = (0..16).map(|k| (k as f64).sin()).collect();
        let mut out = vec![0.0; 16];
        phi.prox_into(eps, &u, &mut out).unwrap();
        let m = DMatrix::identity(16, 16) + sp.stiffness() * eps;
        let direct = m.lu().solve(&DVector::from_vec(u)).unwrap();
        for k in 0..16 {
            assert!((out[k] - direct[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn feasible_point_is_fixed_without_stiffness() {
        let sp = GalerkinSpace::new(8).unwrap();
        let phi = indicator(sp).with_stiffness_weight(0.0).unwrap();
        let u: Vec<f64> = (0..8).map(|k| 0.3 * k as f64).collect();
        let mut out = vec![0.0; 8];
        phi.prox_into(0.5, &u, &mut out).unwrap();
        assert_eq!(out, u);
    }

    #[test]
    fn complementarity() {
        let sp = GalerkinSpace::new(16).unwrap();
        let phi = indicator(sp);
        let eps = 0.02;
        let u: Vec<f64> = sp.nodes().iter().map(|x| (6.0 * x).sin() - 0.3).collect();
        let mut v = vec![0.0; 16];
        phi.prox_into(eps, &u, &mut v).unwrap();
        let g = phi.smooth_residual(eps, &u, &v);
        let mut active = 0;
        for k in 0..16 {
            assert!(v[k] >= 0.0);
            if v[k] > 0.0 {
                assert!(g[k].abs() < 1e-8, "node {k}: {}", g[k]);
            } else {
                active += 1;
                assert!(g[k] >= -1e-8, "node {k}: {}", g[k]);
            }
        }
        assert!(active > 0);
    }

    #[test]
    fn passes_property_suite() {
        for n in [8, 16, 32] {
            let sp = GalerkinSpace::new(n).unwrap();
            let phi = indicator(sp);
            let sample = sample_box(n, 40, 2.0, n as u64);
            for eps in [1.0, 0.1, 0.01] {
                let rep = check_barbu_properties(&phi, eps, &sample).unwrap();
                assert!(rep.holds(1e-9), "n={n} eps={eps}: {rep:?}");
                for pair in sample.chunks(2).take(10) {
                    let slack =
                        check_cross_monotonicity(&phi, eps, 0.5 * eps, &pair[0], &pair[1]).unwrap();
                    assert!(slack >= -1e-9, "n={n} eps={eps}: {slack}");
                }
            }
        }
    }

    #[test]
    fn sweep_cap() {
        let sp = GalerkinSpace::new(32).unwrap();
        let phi = indicator(sp).with_tolerance(1e-14, 3).unwrap();
        let u = vec![-1.0; 32];
        let mut v = vec![1.0; 32];
        let u2: Vec<f64> = (0..32)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert!(phi.prox_into(1.0, &u, &mut v).is_ok());
        assert!(matches!(
            phi.prox_into(1.0, &u2, &mut v),
            Err(Error::Numeric { .. })
        ));
    }
}
