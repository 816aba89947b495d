//! Least-squares conditional expectations on polynomial features of the state.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::stats::block_sum;

/// Above this condition number the normal equations are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Standardized tensor monomials of total degree `≤ degree`.
///
/// Coordinates whose sample standard deviation vanishes carry no information
/// and are left out of the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    degree: usize,
    dim: usize,
    active: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
    exponents: Vec<Vec<u32>>,
}

fn exponents(n_vars: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; n_vars]];
    for total in 1..=degree {
        let mut level = Vec::new();
        compositions(n_vars, total as u32, &mut vec![0; n_vars], 0, &mut level);
        out.extend(level);
    }
    out
}

fn compositions(n: usize, left: u32, cur: &mut Vec<u32>, pos: usize, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == n {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        compositions(n, left - e, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

impl Basis {
    /// Fits the standardization on `states` (`n` rows of length `dim`).
    pub fn fit(states: &[f64], dim: usize, degree: usize) -> Self {
        let n = states.len() / dim;
        let sums = block_sum(n, 2 * dim, |p, acc| {
            for k in 0..dim {
                let x = states[p * dim + k];
                acc[k] += x;
                acc[dim + k] += x * x;
            }
        });
        let nf = n as f64;
        let mut active = Vec::new();
        let mut means = Vec::new();
        let mut scales = Vec::new();
        for k in 0..dim {
            let m = sums[k] / nf;
            let var = (sums[dim + k] / nf - m * m).max(0.0);
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                active.push(k);
                means.push(m);
                scales.push(sd);
            }
        }
        let exponents = if active.is_empty() {
            vec![Vec::new()]
        } else {
            exponents(active.len(), degree)
        };
        Basis {
            degree,
            dim,
            active,
            means,
            scales,
            exponents,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn active_coordinates(&self) -> &[usize] {
        &self.active
    }

    /// Writes the feature vector of state `x` into `out`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        let p = self.degree + 1;
        let mut powers = vec![1.0; self.active.len() * p];
        for (a, &k) in self.active.iter().enumerate() {
            let z = (x[k] - self.means[a]) / self.scales[a];
            for e in 1..p {
                powers[a * p + e] = powers[a * p + e - 1] * z;
            }
        }
        for (o, exps) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (a, &e) in exps.iter().enumerate() {
                if e > 0 {
                    v *= powers[a * p + e as usize];
                }
            }
            *o = v;
        }
    }

    /// Feature matrix, row-major, one row per state.
    pub fn design(&self, states: &[f64]) -> Vec<f64> {
        let n = states.len() / self.dim;
        let nb = self.len();
        let mut out = vec![0.0; n * nb];
        for (row, x) in out.chunks_mut(nb).zip(states.chunks(self.dim)) {
            self.eval(x, row);
        }
        out
    }
}

/// Factored ridge normal equations `(ΦᵀΦ/n + δ I′) c = Φᵀy/n`, where `I′`
/// leaves the constant term unpenalized.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    n_basis: usize,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    pub condition: f64,
}

impl NormalEquations {
    pub fn new(design: &[f64], n_basis: usize, ridge: f64, step: usize) -> Result<Self> {
        let n = design.len() / n_basis;
        let nb = n_basis;
        let gram = block_sum(n, nb * nb, |p, acc| {
            let row = &design[p * nb..(p + 1) * nb];
            for a in 0..nb {
                let ra = row[a];
                for b in a..nb {
                    acc[a * nb + b] += ra * row[b];
                }
            }
        });
        let mut g = DMatrix::from_fn(nb, nb, |a, b| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            gram[lo * nb + hi] / n as f64
        });
        for a in 1..nb {
            g[(a, a)] += ridge;
        }
        let eig = SymmetricEigen::new(g.clone()).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularRegression { step, condition });
        }
        let chol = g
            .cholesky()
            .ok_or(Error::SingularRegression { step, condition })?;
        Ok(NormalEquations {
            n_basis,
            chol,
            condition,
        })
    }

    /// Coefficients (`n_basis × width`) for targets written by `target(p, out)`.
    pub fn solve(
        &self,
        design: &[f64],
        width: usize,
        target: impl Fn(usize, &mut [f64]) + Sync + Send,
    ) -> DMatrix<f64> {
        let nb = self.n_basis;
        let n = design.len() / nb;
        let rhs = block_sum(n, nb * width, |p, acc| {
            let mut y = vec![0.0; width];
            target(p, &mut y);
            let row = &design[p * nb..(p + 1) * nb];
            for a in 0..nb {
                for (m, ym) in y.iter().enumerate() {
                    acc[a * width + m] += row[a] * ym;
                }
            }
        });
        let b = DMatrix::from_fn(nb, width, |a, m| rhs[a * width + m] / n as f64);
        self.chol.solve(&b)
    }
}

/// `out = rowᵀ · coeffs` for a single feature row.
pub fn predict(row: &[f64], coeffs: &DMatrix<f64>, out: &mut [f64]) {
    for (m, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (a, r) in row.iter().enumerate() {
            acc += r * coeffs[(a, m)];
        }
        *o = acc;
    }
}
