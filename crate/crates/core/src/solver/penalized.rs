use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::regression::{predict, Basis, NormalEquations};
use crate::convex::ConvexFunction;
use crate::error::{Error, Result};
use crate::generator::{Generator, TerminalCondition};
use crate::sim::{MartingaleEnsemble, TimeGrid};
use crate::stats::{block_sum, mean_se};

/// How the implicit penalty equation `y + (Δt/ε)(y − J_ε y) = r` is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImplicitStep {
    /// Exact: `J_ε y = J_{ε+Δt} r`, so one resolvent evaluation suffices.
    ClosedForm,
    /// Damped iteration `y ← (r + (Δt/ε) J_ε y) / (1 + Δt/ε)`.
    FixedPoint,
}

/// How `Z` is extracted at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZEstimator {
    /// One least-squares fit of `Y_{i+1}` on `φ(M_i)` and `φ(M_i) ⊗ ΔM_i`;
    /// the `ΔM` coefficients give `Z`, the rest give `Ê_i[Y_{i+1}]`.
    Joint,
    /// `Z = Ê[(Y − ÊY) ΔMᵀ] · S⁺` with `S` the sample mean of `ΔM ΔMᵀ`.
    Empirical,
    /// `Z = Ê[(Y − ÊY) ΔMᵀ] · (Q Δt)⁺`.
    Theoretical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub lambda: f64,
    pub degree: usize,
    pub ridge: f64,
    pub inner_iterations: usize,
    pub inner_tol: f64,
    pub cfl_ratio: f64,
    pub implicit: ImplicitStep,
    pub z_estimator: ZEstimator,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 0.1,
            lambda: 1.0,
            degree: 2,
            ridge: 1e-8,
            inner_iterations: 1000,
            inner_tol: 1e-12,
            cfl_ratio: 1.0,
            implicit: ImplicitStep::ClosedForm,
            z_estimator: ZEstimator::Joint,
        }
    }
}

impl SolverConfig {
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        SolverConfig {
            epsilon,
            ..self.clone()
        }
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("epsilon must be positive"));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::config("inner_tol must be positive"));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::config("ridge must be nonnegative"));
        }
        if !self.lambda.is_finite() {
            return Err(Error::config("lambda must be finite"));
        }
        let ratio = grid.dt() / self.epsilon;
        if ratio > self.cfl_ratio * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "dt/epsilon = {ratio} exceeds cfl_ratio {}; refine the grid",
                self.cfl_ratio
            )));
        }
        Ok(())
    }
}

/// Fitted regressions of one backward step, enough to replay the step on
/// another ensemble.
#[derive(Debug, Clone)]
pub struct StepFit {
    pub basis: Basis,
    /// `Ê_i[Y_{i+1}]` coefficients, `n_basis × d`.
    pub continuation: DMatrix<f64>,
    /// `Ê_i[(Y_{i+1} − Ê_i Y_{i+1}) ΔM_iᵀ]` coefficients, `n_basis × d²` (row-major blocks).
    pub covariation: DMatrix<f64>,
    /// Right factor turning the covariation into `Z`.
    pub z_map: DMatrix<f64>,
    /// `Q(t_i)^{1/2}`.
    pub q_sqrt: DMatrix<f64>,
}

impl StepFit {
    /// `Z_i` at state `x`.
    pub fn z_at(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let mut row = vec![0.0; self.basis.len()];
        self.basis.eval(x, &mut row);
        let mut w = vec![0.0; d * d];
        predict(&row, &self.covariation, &mut w);
        DMatrix::from_row_slice(d, d, &w) * &self.z_map
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub condition: f64,
    /// `mean |Y_{i+1} − Ê_i Y_{i+1}|²`.
    pub residual_energy: f64,
    pub n_basis: usize,
    /// Largest `|y + Δt·U − r|` of the implicit step.
    pub implicit_residual: f64,
    pub inner_iterations: usize,
}

/// Discrete solution of the penalized equation on one ensemble.
///
/// Arrays are step-major: entry `(i, p, k)` lives at `(i·n_paths + p)·d + k`.
#[derive(Clone)]
pub struct PenalizedSolution {
    pub grid: TimeGrid,
    pub dim: usize,
    pub n_paths: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub seed: u64,
    states: Arc<Vec<f64>>,
    y: Vec<f64>,
    u: Vec<f64>,
    resolvent: Vec<f64>,
    continuation: Vec<f64>,
    n_residual: Vec<f64>,
    pub fits: Vec<StepFit>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub y0: Vec<f64>,
    pub y0_std_err: Vec<f64>,
}

impl std::fmt::Debug for PenalizedSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PenalizedSolution")
            .field("grid", &self.grid)
            .field("dim", &self.dim)
            .field("n_paths", &self.n_paths)
            .field("epsilon", &self.epsilon)
            .field("y0", &self.y0)
            .finish_non_exhaustive()
    }
}

impl PenalizedSolution {
    fn at<'a>(&self, a: &'a [f64], i: usize, p: usize) -> &'a [f64] {
        let o = (i * self.n_paths + p) * self.dim;
        &a[o..o + self.dim]
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    /// `Y_i` on path `p`, `0 ≤ i ≤ N`.
    pub fn y(&self, i: usize, p: usize) -> &[f64] {
        self.at(&self.y, i, p)
    }

    /// `U_i = (1/ε)(Y_i − J_ε Y_i)`, `i < N`.
    pub fn u(&self, i: usize, p: usize) -> &[f64] {
        self.at(&self.u, i, p)
    }

    /// `J_ε Y_i`, `i < N`.
    pub fn resolvent(&self, i: usize, p: usize) -> &[f64] {
        self.at(&self.resolvent, i, p)
    }

    /// `Ê_i[Y_{i+1}]`, `i < N`.
    pub fn continuation(&self, i: usize, p: usize) -> &[f64] {
        self.at(&self.continuation, i, p)
    }

    /// `ΔN̂_i = Y_{i+1} − Ê_i[Y_{i+1}] − Z_i ΔM_i`, `i < N`.
    pub fn n_residual(&self, i: usize, p: usize) -> &[f64] {
        self.at(&self.n_residual, i, p)
    }

    /// `M(t_i)` on path `p`.
    pub fn state(&self, i: usize, p: usize) -> &[f64] {
        self.at(&self.states, i, p)
    }

    /// `Z_i` on path `p`, recomputed from the stored fit.
    pub fn z(&self, i: usize, p: usize) -> DMatrix<f64> {
        self.fits[i].z_at(self.state(i, p))
    }

    /// `Z_i Q(t_i)^{1/2}`.
    pub fn zq(&self, i: usize, p: usize) -> DMatrix<f64> {
        self.z(i, p) * &self.fits[i].q_sqrt
    }

    pub fn y_slice(&self, i: usize) -> &[f64] {
        let w = self.n_paths * self.dim;
        &self.y[i * w..(i + 1) * w]
    }

    /// Writes the binary dump: magic `BSVISOL1`, `d, N, n_paths, seed` as
    /// little-endian `u64`, `ε` as little-endian `f64`, then the Y, Z, U and
    /// ΔN̂ sections in step-major order.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"BSVISOL1")?;
        for h in [
            self.dim as u64,
            self.n_steps() as u64,
            self.n_paths as u64,
            self.seed,
        ] {
            w.write_all(&h.to_le_bytes())?;
        }
        w.write_all(&self.epsilon.to_le_bytes())?;
        for x in &self.y {
            w.write_all(&x.to_le_bytes())?;
        }
        for i in 0..self.n_steps() {
            for p in 0..self.n_paths {
                let z = self.z(i, p);
                for a in 0..self.dim {
                    for b in 0..self.dim {
                        w.write_all(&z[(a, b)].to_le_bytes())?;
                    }
                }
            }
        }
        for x in self.u.iter().chain(&self.n_residual) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_dims(
    phi: &dyn ConvexFunction,
    f: &Generator,
    xi: &TerminalCondition,
    ens: &MartingaleEnsemble,
) -> Result<()> {
    let d = ens.dim();
    if phi.dim() != d || xi.dim() != d || f.dim().is_some_and(|g| g != d) {
        return Err(Error::config(format!(
            "dimension mismatch: ensemble {d}, phi {}, xi {}, generator {:?}",
            phi.dim(),
            xi.dim(),
            f.dim()
        )));
    }
    Ok(())
}

/// Backward induction for the penalized equation: regression for the
/// conditional expectations, explicit driver, implicit penalty.
pub fn solve_penalized(
    phi: &dyn ConvexFunction,
    f: &Generator,
    xi: &TerminalCondition,
    ens: &MartingaleEnsemble,
    cfg: &SolverConfig,
) -> Result<PenalizedSolution> {
    run(phi, f, xi, ens, cfg, None)
}

/// Replays the regressions of `fitted` on another ensemble without refitting.
pub fn replay_penalized(
    fitted: &PenalizedSolution,
    phi: &dyn ConvexFunction,
    f: &Generator,
    xi: &TerminalCondition,
    ens: &MartingaleEnsemble,
    cfg: &SolverConfig,
) -> Result<PenalizedSolution> {
    if fitted.grid != *ens.grid() || fitted.dim != ens.dim() {
        return Err(Error::usage(
            "replay ensemble must share grid and dimension",
        ));
    }
    run(phi, f, xi, ens, cfg, Some(&fitted.fits))
}

struct PathOut {
    ehat: Vec<f64>,
    y: Vec<f64>,
    u: Vec<f64>,
    j: Vec<f64>,
    n: Vec<f64>,
    residual: f64,
    iterations: usize,
}

/// One implicit penalty step: solves `y + Δt·U = r` with `U = (1/ε)(y − J_ε y)`,
/// writing `y`, `J_ε y` and `U`. Returns the number of resolvent iterations.
pub fn implicit_step(
    phi: &dyn ConvexFunction,
    cfg: &SolverConfig,
    dt: f64,
    r: &[f64],
    y: &mut [f64],
    v: &mut [f64],
    u: &mut [f64],
) -> Result<usize> {
    let eps = cfg.epsilon;
    match cfg.implicit {
        ImplicitStep::ClosedForm => {
            phi.prox_into(eps + dt, r, v)?;
            for k in 0..r.len() {
                let g = (r[k] - v[k]) / (eps + dt);
                u[k] = g;
                y[k] = v[k] + eps * g;
            }
            Ok(1)
        }
        ImplicitStep::FixedPoint => {
            let theta = dt / eps;
            y.copy_from_slice(r);
            let mut j = vec![0.0; r.len()];
            let mut last = f64::INFINITY;
            for it in 1..=cfg.inner_iterations {
                phi.prox_into(eps, y, &mut j)?;
                let mut change: f64 = 0.0;
                let mut size: f64 = 0.0;
                for k in 0..r.len() {
                    let next = (r[k] + theta * j[k]) / (1.0 + theta);
                    change = change.max((next - y[k]).abs());
                    size = size.max(next.abs());
                    y[k] = next;
                }
                last = change;
                if change <= cfg.inner_tol * (1.0 + size) {
                    phi.prox_into(eps, y, v)?;
                    for k in 0..r.len() {
                        u[k] = (y[k] - v[k]) / eps;
                    }
                    return Ok(it);
                }
            }
            Err(Error::numeric(
                format!(
                    "implicit penalty step did not converge in {} iterations",
                    cfg.inner_iterations
                ),
                last,
            ))
        }
    }
}

fn fit_covariation(
    basis: Basis,
    ens: &MartingaleEnsemble,
    s_i: &[f64],
    i: usize,
    y_next: &[f64],
    ridge: f64,
    est: ZEstimator,
) -> Result<(StepFit, f64)> {
    let d = ens.dim();
    let factor = ens.factor(i);
    let s_design = basis.design(s_i);
    let nb = basis.len();
    let ne = NormalEquations::new(&s_design, nb, ridge, i)?;
    let continuation = ne.solve(&s_design, d, |p, out| {
        out.copy_from_slice(&y_next[p * d..(p + 1) * d]);
    });
    let covariation = ne.solve(&s_design, d * d, |p, out| {
        let mut ehat = vec![0.0; d];
        predict(&s_design[p * nb..(p + 1) * nb], &continuation, &mut ehat);
        let inc = ens.increment(p, i);
        for a in 0..d {
            let dev = y_next[p * d + a] - ehat[a];
            for b in 0..d {
                out[a * d + b] = dev * inc[b];
            }
        }
    });
    let z_map = match est {
        ZEstimator::Theoretical => &factor.pinv / ens.grid().dt(),
        _ => empirical_bracket_pinv(ens, i),
    };
    let fit = StepFit {
        basis,
        continuation,
        covariation,
        z_map,
        q_sqrt: factor.sqrt.clone(),
    };
    Ok((fit, ne.condition))
}

fn fit_joint(
    basis: Basis,
    ens: &MartingaleEnsemble,
    s_i: &[f64],
    i: usize,
    y_next: &[f64],
    ridge: f64,
) -> Result<(StepFit, f64)> {
    let d = ens.dim();
    let np = ens.n_paths();
    let factor = ens.factor(i);
    let base = basis.design(s_i);
    let nb = basis.len();

    // Increment coordinates are scaled to unit sample deviation; coordinates
    // that never move get no column and hence a zero column of Z.
    let sums = block_sum(np, d, |p, acc| {
        for (a, x) in acc.iter_mut().zip(ens.increment(p, i)) {
            *a += x * x;
        }
    });
    let sd: Vec<f64> = sums.iter().map(|s| (s / np as f64).sqrt()).collect();
    let top = sd.iter().cloned().fold(0.0, f64::max);
    let moving: Vec<usize> = (0..d).filter(|&j| sd[j] > 1e-10 * top).collect();
    let m = moving.len();
    let width = nb * (1 + m);

    let mut design = vec![0.0; np * width];
    for (p, row) in design.chunks_mut(width).enumerate() {
        let phi = &base[p * nb..(p + 1) * nb];
        row[..nb].copy_from_slice(phi);
        let inc = ens.increment(p, i);
        for k in 0..nb {
            for (c, &j) in moving.iter().enumerate() {
                row[nb + k * m + c] = phi[k] * inc[j] / sd[j];
            }
        }
    }
    let ne = NormalEquations::new(&design, width, ridge, i)?;
    let coef = ne.solve(&design, d, |p, out| {
        out.copy_from_slice(&y_next[p * d..(p + 1) * d]);
    });
    let continuation = coef.rows(0, nb).into_owned();
    let mut covariation = DMatrix::zeros(nb, d * d);
    for k in 0..nb {
        for (c, &j) in moving.iter().enumerate() {
            for a in 0..d {
                covariation[(k, a * d + j)] = coef[(nb + k * m + c, a)] / sd[j];
            }
        }
    }
    let fit = StepFit {
        basis,
        continuation,
        covariation,
        z_map: DMatrix::identity(d, d),
        q_sqrt: factor.sqrt.clone(),
    };
    Ok((fit, ne.condition))
}

/// Pseudoinverse of the sample mean of `ΔM_i ΔM_iᵀ`.
fn empirical_bracket_pinv(ens: &MartingaleEnsemble, i: usize) -> DMatrix<f64> {
    let d = ens.dim();
    let sums = block_sum(ens.n_paths(), d * d, |p, acc| {
        let inc = ens.increment(p, i);
        for a in 0..d {
            for b in 0..d {
                acc[a * d + b] += inc[a] * inc[b];
            }
        }
    });
    let s = DMatrix::from_row_slice(d, d, &sums) / ens.n_paths() as f64;
    let eig = nalgebra::SymmetricEigen::new(s);
    let cut = 1e-10 * eig.eigenvalues.amax();
    let inv = eig.eigenvalues.map(|l| if l > cut { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

fn run(
    phi: &dyn ConvexFunction,
    f: &Generator,
    xi: &TerminalCondition,
    ens: &MartingaleEnsemble,
    cfg: &SolverConfig,
    replay: Option<&[StepFit]>,
) -> Result<PenalizedSolution> {
    check_dims(phi, f, xi, ens)?;
    let grid = *ens.grid();
    cfg.validate(&grid)?;
    let (d, n, np) = (ens.dim(), grid.n_steps(), ens.n_paths());
    let dt = grid.dt();
    let w = np * d;
    let states = Arc::new(ens.states());

    let mut y = vec![0.0; (n + 1) * w];
    let terminal: Vec<Vec<f64>> = (0..np)
        .into_par_iter()
        .map(|p| xi.evaluate(ens, p))
        .collect::<Result<_>>()?;
    for (p, v) in terminal.iter().enumerate() {
        y[n * w + p * d..n * w + (p + 1) * d].copy_from_slice(v);
    }

    let mut u = vec![0.0; n * w];
    let mut resolvent = vec![0.0; n * w];
    let mut continuation = vec![0.0; n * w];
    let mut n_residual = vec![0.0; n * w];
    let mut fits: Vec<Option<StepFit>> = vec![None; n];
    let mut diagnostics = vec![
        StepDiagnostics {
            condition: 1.0,
            residual_energy: 0.0,
            n_basis: 0,
            implicit_residual: 0.0,
            inner_iterations: 0,
        };
        n
    ];

    for i in (0..n).rev() {
        let s_i = &states[i * w..(i + 1) * w];
        let (head, tail) = y.split_at_mut((i + 1) * w);
        let y_next: &[f64] = &tail[..w];
        let y_cur = &mut head[i * w..];
        let t = grid.node(i);

        let fit = match replay {
            Some(fs) => fs[i].clone(),
            None => {
                let basis = Basis::fit(s_i, d, cfg.degree);
                let (fit, condition) = match cfg.z_estimator {
                    ZEstimator::Joint => fit_joint(basis, ens, s_i, i, y_next, cfg.ridge)?,
                    est => fit_covariation(basis, ens, s_i, i, y_next, cfg.ridge, est)?,
                };
                diagnostics[i].condition = condition;
                fit
            }
        };
        diagnostics[i].n_basis = fit.basis.len();

        let outs: Vec<PathOut> = (0..np)
            .into_par_iter()
            .map(|p| -> Result<PathOut> {
                let x = &s_i[p * d..(p + 1) * d];
                let mut row = vec![0.0; fit.basis.len()];
                fit.basis.eval(x, &mut row);
                let mut ehat = vec![0.0; d];
                predict(&row, &fit.continuation, &mut ehat);
                let mut wv = vec![0.0; d * d];
                predict(&row, &fit.covariation, &mut wv);
                let z = DMatrix::from_row_slice(d, d, &wv) * &fit.z_map;
                let zq = &z * &fit.q_sqrt;
                let drift = f.eval_checked(t, &ehat, &zq)?;
                let r: Vec<f64> = ehat.iter().zip(&drift).map(|(e, g)| e + g * dt).collect();
                let mut yv = vec![0.0; d];
                let mut jv = vec![0.0; d];
                let mut uv = vec![0.0; d];
                let iterations = implicit_step(phi, cfg, dt, &r, &mut yv, &mut jv, &mut uv)?;
                let residual = (0..d)
                    .map(|k| (yv[k] + dt * uv[k] - r[k]).abs())
                    .fold(0.0, f64::max);
                let inc = ens.increment(p, i);
                let nv: Vec<f64> = (0..d)
                    .map(|a| {
                        let zdm: f64 = (0..d).map(|b| z[(a, b)] * inc[b]).sum();
                        y_next[p * d + a] - ehat[a] - zdm
                    })
                    .collect();
                Ok(PathOut {
                    ehat,
                    y: yv,
                    u: uv,
                    j: jv,
                    n: nv,
                    residual,
                    iterations,
                })
            })
            .collect::<Result<_>>()?;

        let mut worst: f64 = 0.0;
        let mut iters = 0;
        for (p, o) in outs.iter().enumerate() {
            let r = p * d..(p + 1) * d;
            let g = i * w + p * d..i * w + (p + 1) * d;
            y_cur[r.clone()].copy_from_slice(&o.y);
            u[g.clone()].copy_from_slice(&o.u);
            resolvent[g.clone()].copy_from_slice(&o.j);
            continuation[g.clone()].copy_from_slice(&o.ehat);
            n_residual[g].copy_from_slice(&o.n);
            worst = worst.max(o.residual);
            iters = iters.max(o.iterations);
        }
        let energy = block_sum(np, 1, |p, acc| {
            for k in 0..d {
                let e = y_next[p * d + k] - outs[p].ehat[k];
                acc[0] += e * e;
            }
        })[0];
        diagnostics[i].residual_energy = energy / np as f64;
        diagnostics[i].implicit_residual = worst;
        diagnostics[i].inner_iterations = iters;
        fits[i] = Some(fit);
    }

    let mut y0 = vec![0.0; d];
    let mut y0_std_err = vec![0.0; d];
    for k in 0..d {
        let first: Vec<f64> = (0..np).map(|p| y[p * d + k]).collect();
        y0[k] = mean_se(&first).mean;
        let next: Vec<f64> = (0..np).map(|p| y[w + p * d + k]).collect();
        y0_std_err[k] = mean_se(&next).std_err;
    }

    Ok(PenalizedSolution {
        grid,
        dim: d,
        n_paths: np,
        epsilon: cfg.epsilon,
        lambda: cfg.lambda,
        seed: ens.seed(),
        states,
        y,
        u,
        resolvent,
        continuation,
        n_residual,
        fits: fits
            .into_iter()
            .map(|f| f.expect("every step fitted"))
            .collect(),
        diagnostics,
        y0,
        y0_std_err,
    })
}
