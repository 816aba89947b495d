use crate::convex::ConvexFunction;
use crate::error::{Error, Result};
use crate::generator::{Generator, TerminalCondition};
use crate::sim::{simulate_ensemble, CovarianceSpec, MartingaleEnsemble, TimeGrid};
use crate::solver::{replay_penalized, solve_penalized, weighted_distance, SolverConfig};
use crate::stats::{mean_se, MeanSe};

/// One side of a uniqueness comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    pub seed: u64,
    pub degree: usize,
}

/// Weighted distances between two numerical solutions, both replayed on
/// a common evaluation ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDistance {
    /// `Σ e^{λt}(|δY|² + ‖δZ Q^{1/2}‖²)Δt`.
    pub integral: f64,
    /// `mean sup_t e^{λt}|δY_t|²`.
    pub sup: f64,
}

/// Fits two solutions with `n_paths` paths each and measures their distance
/// on `eval`.
#[allow(clippy::too_many_arguments)]
pub fn pair_distance(
    phi: &dyn ConvexFunction,
    f: &Generator,
    xi: &TerminalCondition,
    cov: &CovarianceSpec,
    eval: &MartingaleEnsemble,
    n_paths: usize,
    runs: (RunSpec, RunSpec),
    cfg: &SolverConfig,
) -> Result<PairDistance> {
    let grid: &TimeGrid = eval.grid();
    let replayed = |run: RunSpec| -> Result<_> {
        let cfg = SolverConfig {
            degree: run.degree,
            ..cfg.clone()
        };
        let ens = simulate_ensemble(cov, grid, n_paths, run.seed)?;
        let fitted = solve_penalized(phi, f, xi, &ens, &cfg)?;
        replay_penalized(&fitted, phi, f, xi, eval, &cfg)
    };
    let a = replayed(runs.0)?;
    let b = replayed(runs.1)?;
    let d = weighted_distance(&a, &b, cfg.lambda)?;
    Ok(PairDistance {
        integral: d.integral,
        sup: d.pathwise_sup,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub n_paths: usize,
    pub small: (MeanSe, MeanSe),
    pub large: (MeanSe, MeanSe),
    /// Large-sample over small-sample mean distance; `1/4` under `1/n` scaling.
    pub integral_ratio: f64,
    pub sup_ratio: f64,
}

/// Averages independent-seed distances over `replicates` seed pairs at
/// `n_paths` and `4·n_paths`.
#[allow(clippy::too_many_arguments)]
pub fn uniqueness_probe(
    phi: &dyn ConvexFunction,
    f: &Generator,
    xi: &TerminalCondition,
    cov: &CovarianceSpec,
    eval: &MartingaleEnsemble,
    n_paths: usize,
    replicates: usize,
    base_seed: u64,
    cfg: &SolverConfig,
) -> Result<UniquenessReport> {
    if replicates < 2 {
        return Err(Error::usage("uniqueness probe needs at least 2 replicates"));
    }
    let degree = cfg.degree;
    let collect = |n: usize, offset: u64| -> Result<(MeanSe, MeanSe)> {
        let mut integral = Vec::with_capacity(replicates);
        let mut sup = Vec::with_capacity(replicates);
        for r in 0..replicates as u64 {
            let s = base_seed + offset + 2 * r;
            let runs = (
                RunSpec { seed: s, degree },
                RunSpec {
                    seed: s + 1,
                    degree,
                },
            );
            let d = pair_distance(phi, f, xi, cov, eval, n, runs, cfg)?;
            integral.push(d.integral);
            sup.push(d.sup);
        }
        Ok((mean_se(&integral), mean_se(&sup)))
    };
    let small = collect(n_paths, 0)?;
    let large = collect(4 * n_paths, 1 << 32)?;
    let ratio = |a: &MeanSe, b: &MeanSe| {
        if a.mean > 0.0 {
            Ok(b.mean / a.mean)
        } else {
            Err(Error::Degenerate(
                "independent-seed distances vanish".into(),
            ))
        }
    };
    Ok(UniquenessReport {
        n_paths,
        integral_ratio: ratio(&small.0, &large.0)?,
        sup_ratio: ratio(&small.1, &large.1)?,
        small,
        large,
    })
}
