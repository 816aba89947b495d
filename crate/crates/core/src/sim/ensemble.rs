use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::covariance::{CovFactor, CovarianceSpec};
use super::grid::TimeGrid;
use super::rng;
use crate::error::{Error, Result};
use crate::stats::{block_sum, mean_se, MeanSe};

const MAGIC: &[u8; 8] = b"BSVIENS1";

/// Increments of a Gaussian martingale `M` with `M(0) = 0` on a uniform grid.
///
/// Increments are stored path-major: path `p`, step `i`, coordinate `k` sits
/// at `(p·N + i)·d + k`.
#[derive(Clone)]
pub struct MartingaleEnsemble {
    grid: TimeGrid,
    cov: CovarianceSpec,
    factors: Vec<Arc<CovFactor>>,
    n_paths: usize,
    seed: u64,
    increments: Vec<f64>,
}

impl fmt::Debug for MartingaleEnsemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MartingaleEnsemble")
            .field("grid", &self.grid)
            .field("dim", &self.dim())
            .field("n_paths", &self.n_paths)
            .field("seed", &self.seed)
            .finish()
    }
}

fn factors_on(cov: &CovarianceSpec, grid: &TimeGrid) -> Result<Vec<Arc<CovFactor>>> {
    (0..grid.n_steps())
        .map(|i| cov.factor_at(grid.node(i)))
        .collect()
}

/// Simulates `ΔM_i = Q(t_i)^{1/2} ξ_i √Δt` with `ξ_i` keyed by `(seed, path, step)`.
pub fn simulate_ensemble(
    cov: &CovarianceSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<MartingaleEnsemble> {
    if n_paths == 0 {
        return Err(Error::config("n_paths must be at least 1"));
    }
    let factors = factors_on(cov, grid)?;
    let (d, n) = (cov.dim(), grid.n_steps());
    let sdt = grid.dt().sqrt();
    let mut increments = vec![0.0; n_paths * n * d];
    increments
        .par_chunks_mut(n * d)
        .enumerate()
        .for_each(|(p, path)| {
            let mut r = rng::path_rng(seed, p as u64);
            let mut xi = vec![0.0; d];
            for (i, out) in path.chunks_mut(d).enumerate() {
                rng::fill_normals(&mut r, i as u64, &mut xi);
                let s = &factors[i].sqrt;
                for (a, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (b, x) in xi.iter().enumerate() {
                        acc += s[(a, b)] * x;
                    }
                    *o = acc * sdt;
                }
            }
        });
    Ok(MartingaleEnsemble {
        grid: *grid,
        cov: cov.clone(),
        factors,
        n_paths,
        seed,
        increments,
    })
}

impl MartingaleEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn covariance(&self) -> &CovarianceSpec {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Factorization of `Q(t_i)` for step `i < N`.
    pub fn factor(&self, step: usize) -> &CovFactor {
        &self.factors[step]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// All `N·d` increments of one path.
    pub fn path(&self, p: usize) -> &[f64] {
        let w = self.grid.n_steps() * self.dim();
        &self.increments[p * w..(p + 1) * w]
    }

    pub fn increment(&self, p: usize, step: usize) -> &[f64] {
        let d = self.dim();
        &self.path(p)[step * d..(step + 1) * d]
    }

    /// `M(t_i)` for every node and path, laid out as `(i·n_paths + p)·d + k`.
    pub fn states(&self) -> Vec<f64> {
        let (d, n, np) = (self.dim(), self.grid.n_steps(), self.n_paths);
        let mut out = vec![0.0; (n + 1) * np * d];
        for i in 0..n {
            let (done, rest) = out.split_at_mut((i + 1) * np * d);
            let prev = &done[i * np * d..];
            let next = &mut rest[..np * d];
            for p in 0..np {
                let inc = self.increment(p, i);
                for k in 0..d {
                    next[p * d + k] = prev[p * d + k] + inc[k];
                }
            }
        }
        out
    }

    /// `M(T)` for path `p`.
    pub fn terminal(&self, p: usize) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for inc in self.path(p).chunks(d) {
            for (a, b) in m.iter_mut().zip(inc) {
                *a += b;
            }
        }
        m
    }

    /// Writes the binary cache: magic, then `d, N, n_paths, seed` as
    /// little-endian `u64`, then the increments as little-endian `f64`.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        for h in [
            self.dim() as u64,
            self.grid.n_steps() as u64,
            self.n_paths as u64,
            self.seed,
        ] {
            w.write_all(&h.to_le_bytes())?;
        }
        for x in &self.increments {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a cache written by [`write_to`](Self::write_to). The covariance
    /// and grid must match the ones the cache was simulated with.
    pub fn read_from(path: &Path, cov: &CovarianceSpec, grid: &TimeGrid) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("ensemble file is truncated".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("bad ensemble magic".into()));
        }
        let mut header = [0u64; 4];
        let mut buf = [0u8; 8];
        for h in header.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format("ensemble header is truncated".into()))?;
            *h = u64::from_le_bytes(buf);
        }
        let [d, n, n_paths, seed] = header;
        if d as usize != cov.dim() || n as usize != grid.n_steps() {
            return Err(Error::Format(format!(
                "ensemble cache has d={d}, N={n}; expected d={}, N={}",
                cov.dim(),
                grid.n_steps()
            )));
        }
        let len = (d * n * n_paths) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != len * 8 || n_paths == 0 {
            return Err(Error::Format(format!(
                "ensemble body has {} bytes, expected {}",
                bytes.len(),
                len * 8
            )));
        }
        let increments = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(MartingaleEnsemble {
            grid: *grid,
            cov: cov.clone(),
            factors: factors_on(cov, grid)?,
            n_paths: n_paths as usize,
            seed,
            increments,
        })
    }
}

/// Quadratic variation at one node: the path average of `Σ_{i<k} ΔM_i ΔM_iᵀ`
/// against the target `Σ_{i<k} Q(t_i) Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketNode {
    pub t: f64,
    pub empirical: DMatrix<f64>,
    pub target: DMatrix<f64>,
    /// Entrywise standard error of `empirical`.
    pub std_err: DMatrix<f64>,
}

impl BracketNode {
    /// Largest `|empirical − target|` measured in standard errors.
    pub fn max_z_score(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((e, t), s) in self.empirical.iter().zip(&self.target).zip(&self.std_err) {
            let diff = (e - t).abs();
            let z = if *s > 0.0 {
                diff / s
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
        worst
    }
}

pub fn empirical_bracket(ens: &MartingaleEnsemble) -> Vec<BracketNode> {
    let (d, n, np) = (ens.dim(), ens.grid.n_steps(), ens.n_paths);
    let dd = d * d;
    let width = 2 * (n + 1) * dd;
    let sums = block_sum(np, width, |p, acc| {
        let mut run = vec![0.0; dd];
        for i in 0..n {
            let inc = ens.increment(p, i);
            for a in 0..d {
                for b in 0..d {
                    run[a * d + b] += inc[a] * inc[b];
                }
            }
            let base = 2 * (i + 1) * dd;
            for (e, r) in run.iter().enumerate() {
                acc[base + e] += r;
                acc[base + dd + e] += r * r;
            }
        }
    });
    let npf = np as f64;
    let mut target = DMatrix::zeros(d, d);
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            target += &ens.factors[k - 1].q * ens.grid.dt();
        }
        let base = 2 * k * dd;
        let mean = DMatrix::from_fn(d, d, |a, b| sums[base + a * d + b] / npf);
        let se = DMatrix::from_fn(d, d, |a, b| {
            if np < 2 {
                return 0.0;
            }
            let m = mean[(a, b)];
            let var = (sums[base + dd + a * d + b] / npf - m * m).max(0.0) * npf / (npf - 1.0);
            (var / npf).sqrt()
        });
        out.push(BracketNode {
            t: ens.grid.node(k),
            empirical: mean,
            target: target.clone(),
            std_err: se,
        });
    }
    out
}

type IntegrandFn = Arc<dyn Fn(usize, &[f64]) -> DMatrix<f64> + Send + Sync>;

/// Piecewise-constant integrand `Φ_i` on `[t_i, t_{i+1})`.
///
/// `eval(i, past)` receives the increments of steps `0..i` (flattened) and
/// returns an `out_dim × d` matrix. `lookahead` declares how many future
/// steps the integrand reads; only `0` is adapted.
#[derive(Clone)]
pub struct SimpleIntegrand {
    pub out_dim: usize,
    pub lookahead: usize,
    pub eval: IntegrandFn,
}

impl SimpleIntegrand {
    pub fn new(
        out_dim: usize,
        eval: impl Fn(usize, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        SimpleIntegrand {
            out_dim,
            lookahead: 0,
            eval: Arc::new(eval),
        }
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        let rows = m.nrows();
        SimpleIntegrand::new(rows, move |_, _| m.clone())
    }
}

/// Both sides of the isometry `E|Σ Φ_i ΔM_i|² = Σ E‖Φ_i Q(t_i)^{1/2}‖²_F Δt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsometryReport {
    pub lhs: MeanSe,
    pub rhs: MeanSe,
    /// Path-wise difference `lhs − rhs`, whose standard error is the right
    /// scale for comparing the two estimates.
    pub difference: MeanSe,
}

pub fn isometry_check(ens: &MartingaleEnsemble, phi: &SimpleIntegrand) -> Result<IsometryReport> {
    if phi.lookahead > 0 {
        return Err(Error::usage(format!(
            "integrand reads {} future step(s) and is not adapted",
            phi.lookahead
        )));
    }
    let (d, n) = (ens.dim(), ens.grid.n_steps());
    let dt = ens.grid.dt();
    let per_path: Vec<Result<(f64, f64)>> = (0..ens.n_paths)
        .into_par_iter()
        .map(|p| {
            let path = ens.path(p);
            let mut integral = DVector::zeros(phi.out_dim);
            let mut energy = 0.0;
            for i in 0..n {
                let m = (phi.eval)(i, &path[..i * d]);
                if m.nrows() != phi.out_dim || m.ncols() != d {
                    return Err(Error::usage(format!(
                        "integrand returned {}x{}, expected {}x{d}",
                        m.nrows(),
                        m.ncols(),
                        phi.out_dim
                    )));
                }
                let inc = DVector::from_column_slice(ens.increment(p, i));
                integral += &m * inc;
                energy += (&m * &ens.factors[i].sqrt).norm_squared() * dt;
            }
            Ok((integral.norm_squared(), energy))
        })
        .collect();
    let mut lhs = Vec::with_capacity(ens.n_paths);
    let mut rhs = Vec::with_capacity(ens.n_paths);
    for r in per_path {
        let (a, b) = r?;
        lhs.push(a);
        rhs.push(b);
    }
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    Ok(IsometryReport {
        lhs: mean_se(&lhs),
        rhs: mean_se(&rhs),
        difference: mean_se(&diff),
    })
}
