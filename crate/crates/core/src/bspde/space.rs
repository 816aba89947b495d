use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sim::CovarianceSpec;

/// Uniform grid on `(0, 1)` with homogeneous Dirichlet conditions.
///
/// Vectors hold the values at the `n_grid` interior nodes `x_k = k·h`,
/// `h = 1/(n_grid + 1)`; the boundary values are zero and never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GalerkinSpace {
    n_grid: usize,
    h: f64,
}

impl GalerkinSpace {
    pub fn new(n_grid: usize) -> Result<Self> {
        if n_grid < 2 {
            return Err(Error::config("n_grid must be at least 2"));
        }
        Ok(GalerkinSpace {
            n_grid,
            h: 1.0 / (n_grid + 1) as f64,
        })
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.n_grid).map(|k| k as f64 * self.h).collect()
    }

    /// `K = tridiag(−1, 2, −1)/h²`, the discrete `−Δ`.
    pub fn stiffness(&self) -> DMatrix<f64> {
        let n = self.n_grid;
        let s = 1.0 / (self.h * self.h);
        DMatrix::from_fn(n, n, |a, b| match a.abs_diff(b) {
            0 => 2.0 * s,
            1 => -s,
            _ => 0.0,
        })
    }

    /// `out = K v` without forming `K`.
    pub fn apply_stiffness(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n_grid;
        let s = 1.0 / (self.h * self.h);
        for k in 0..n {
            let left = if k > 0 { v[k - 1] } else { 0.0 };
            let right = if k + 1 < n { v[k + 1] } else { 0.0 };
            out[k] = s * (2.0 * v[k] - left - right);
        }
    }

    /// Discrete Dirichlet energy `½ h vᵀKv ≈ ½∫|∇v|²`.
    pub fn energy(&self, v: &[f64]) -> f64 {
        let mut kv = vec![0.0; self.n_grid];
        self.apply_stiffness(v, &mut kv);
        0.5 * self.h * v.iter().zip(&kv).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `L²(D)` norm `(h Σ v_k²)^{1/2}`.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        (self.h * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    /// Sine mode `k ≥ 1` sampled at the nodes, `sin(kπx)`.
    pub fn sine(&self, k: usize) -> Vec<f64> {
        self.nodes()
            .iter()
            .map(|x| (k as f64 * PI * x).sin())
            .collect()
    }

    /// Eigenvalue of `K` on mode `k`: `μ_k = (4/h²) sin²(kπh/2)`.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let s = (k as f64 * PI * self.h / 2.0).sin();
        4.0 * s * s / (self.h * self.h)
    }

    /// Coefficient of `v` on `sin(kπx)` in the discrete `L²` product.
    pub fn mode_coefficient(&self, v: &[f64], k: usize) -> f64 {
        // The sampled sines are orthogonal with h Σ sin² = 1/2.
        2.0 * self.h * self.sine(k).iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Nodal covariance of a noise that is diagonal in the sine basis with
    /// variance `scale · k^{−decay}` on mode `k`.
    pub fn sine_covariance(&self, scale: f64, decay: f64) -> Result<CovarianceSpec> {
        if !(scale >= 0.0 && scale.is_finite() && decay.is_finite()) {
            return Err(Error::config("noise scale must be nonnegative and finite"));
        }
        let n = self.n_grid;
        // Orthonormal columns: √(2h)·sin(kπx).
        let norm = (2.0 * self.h).sqrt();
        let s = DMatrix::from_fn(n, n, |a, k| {
            norm * ((k + 1) as f64 * PI * (a + 1) as f64 * self.h).sin()
        });
        let lam = DMatrix::from_fn(n, n, |a, b| {
            if a == b {
                scale * ((a + 1) as f64).powf(-decay)
            } else {
                0.0
            }
        });
        let q = &s * lam * s.transpose();
        let q = (&q + q.transpose()) * 0.5;
        CovarianceSpec::constant(q)
    }
}
