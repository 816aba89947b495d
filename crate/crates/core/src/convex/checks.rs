//! Sampled verification of the standard Moreau-Yosida properties.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{dot, norm_sq, resolvent, ConvexFunction, YosidaResult};
use crate::error::{Error, Result};

/// Worst (smallest) slack observed for each property. A property holds on the
/// sample when its slack is `≥ 0` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    /// `−|φ_ε(u) − ½|Dφ_ε(u)|² − εφ(J_ε u)|`.
    pub moreau_identity: f64,
    /// `min(φ_ε(u), ⟨Dφ_ε(u), u⟩ − φ_ε(u))`.
    pub envelope_bounds: f64,
    /// `⟨J_ε u − J_ε v, u − v⟩ − |J_ε u − J_ε v|²`.
    pub firm_nonexpansive: f64,
    /// `φ(v) − φ(J_ε u) − ⟨(1/ε)Dφ_ε(u), v − J_ε u⟩` over finite-valued `v`.
    pub subgradient: f64,
    /// `|u − v| − |Dφ_ε(u) − Dφ_ε(v)|`.
    pub yosida_lipschitz: f64,
    /// Largest observed `|φ(J_ε u) − φ(J_ε v)| / |u − v|`. Reported, never asserted.
    pub value_lipschitz_ratio: f64,
    pub epsilon: f64,
    pub n_points: usize,
}

impl PropertyReport {
    /// Largest violation among the four asserted properties (0 when all hold).
    pub fn worst_violation(&self) -> f64 {
        [
            self.moreau_identity,
            self.envelope_bounds,
            self.firm_nonexpansive,
            self.subgradient,
        ]
        .iter()
        .fold(0.0_f64, |acc, s| acc.max(-s))
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.worst_violation() <= tol && self.yosida_lipschitz >= -tol
    }
}

/// Uniform sample in `[−half_width, half_width]^dim`, reproducible from `seed`.
pub fn sample_box(dim: usize, n: usize, half_width: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| rng.random_range(-half_width..=half_width))
                .collect()
        })
        .collect()
}

/// Checks the Moreau identity, envelope bounds, firm nonexpansiveness, and
/// the subgradient inclusion `(1/ε)Dφ_ε(u) ∈ ∂φ(J_ε u)` on all sample pairs.
pub fn check_barbu_properties(
    phi: &dyn ConvexFunction,
    eps: f64,
    sample: &[Vec<f64>],
) -> Result<PropertyReport> {
    if sample.is_empty() {
        return Err(Error::usage("property check needs a nonempty sample"));
    }
    let ys: Vec<YosidaResult> = sample
        .par_iter()
        .map(|u| resolvent(phi, eps, u))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = sample.iter().map(|v| phi.value(v)).collect();
    let at_resolvent: Vec<f64> = ys.iter().map(|y| phi.value(&y.resolvent_point)).collect();

    let mut moreau = 0.0_f64;
    let mut bounds = f64::INFINITY;
    for ((u, y), pj) in sample.iter().zip(&ys).zip(&at_resolvent) {
        let formula = 0.5 * norm_sq(&y.gradient) + eps * pj;
        moreau = moreau.min(-(y.envelope_value - formula).abs());
        if formula.is_nan() {
            moreau = f64::NEG_INFINITY;
        }
        let upper = dot(&y.gradient, u) - y.envelope_value;
        bounds = bounds.min(y.envelope_value.min(upper));
    }

    let per_point: Vec<(f64, f64, f64, f64)> = (0..sample.len())
        .into_par_iter()
        .map(|i| {
            let (u, yu) = (&sample[i], &ys[i]);
            let mut firm = f64::INFINITY;
            let mut lip = f64::INFINITY;
            let mut ratio = 0.0_f64;
            let mut sub = f64::INFINITY;
            for j in 0..sample.len() {
                let (v, yv) = (&sample[j], &ys[j]);
                if j > i {
                    let du: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
                    let dj: Vec<f64> = yu
                        .resolvent_point
                        .iter()
                        .zip(&yv.resolvent_point)
                        .map(|(a, b)| a - b)
                        .collect();
                    let dd: Vec<f64> = yu
                        .gradient
                        .iter()
                        .zip(&yv.gradient)
                        .map(|(a, b)| a - b)
                        .collect();
                    firm = firm.min(dot(&dj, &du) - norm_sq(&dj));
                    let dist = norm_sq(&du).sqrt();
                    lip = lip.min(dist - norm_sq(&dd).sqrt());
                    if dist > 0.0 {
                        let dv = (at_resolvent[i] - at_resolvent[j]).abs();
                        if dv.is_finite() {
                            ratio = ratio.max(dv / dist);
                        }
                    }
                }
                if values[j].is_finite() {
                    let lin: f64 = yu
                        .gradient
                        .iter()
                        .zip(v.iter().zip(&yu.resolvent_point))
                        .map(|(g, (vk, jk))| g / eps * (vk - jk))
                        .sum();
                    sub = sub.min(values[j] - at_resolvent[i] - lin);
                }
            }
            (firm, lip, ratio, sub)
        })
        .collect();

    let mut report = PropertyReport {
        moreau_identity: moreau,
        envelope_bounds: bounds,
        firm_nonexpansive: f64::INFINITY,
        subgradient: f64::INFINITY,
        yosida_lipschitz: f64::INFINITY,
        value_lipschitz_ratio: 0.0,
        epsilon: eps,
        n_points: sample.len(),
    };
    for (firm, lip, ratio, sub) in per_point {
        report.firm_nonexpansive = report.firm_nonexpansive.min(firm);
        report.yosida_lipschitz = report.yosida_lipschitz.min(lip);
        report.value_lipschitz_ratio = report.value_lipschitz_ratio.max(ratio);
        report.subgradient = report.subgradient.min(sub);
    }
    // A single-point sample has no pairs; report those properties as vacuous.
    for s in [
        &mut report.firm_nonexpansive,
        &mut report.yosida_lipschitz,
        &mut report.subgradient,
    ] {
        if s.is_infinite() && *s > 0.0 {
            *s = 0.0;
        }
    }
    Ok(report)
}

/// Signed slack of the cross-monotonicity inequality
///
/// ```text
/// ⟨(1/ε)Dφ_ε(u) − (1/ε′)Dφ_ε′(v), u − v⟩ ≥ −(1/ε + 1/ε′)|Dφ_ε(u)||Dφ_ε′(v)|
/// ```
///
/// i.e. left side minus right side; nonnegative when the inequality holds.
pub fn check_cross_monotonicity(
    phi: &dyn ConvexFunction,
    eps: f64,
    eps_prime: f64,
    u: &[f64],
    v: &[f64],
) -> Result<f64> {
    let ru = resolvent(phi, eps, u)?;
    let rv = resolvent(phi, eps_prime, v)?;
    let inner: f64 = ru
        .gradient
        .iter()
        .zip(&rv.gradient)
        .zip(u.iter().zip(v))
        .map(|((gu, gv), (a, b))| (gu / eps - gv / eps_prime) * (a - b))
        .sum();
    let product = norm_sq(&ru.gradient).sqrt() * norm_sq(&rv.gradient).sqrt();
    Ok(inner + (1.0 / eps + 1.0 / eps_prime) * product)
}

/// `|J_ε u − Π_{cl Dom φ}(u)|`, when the function exposes its domain projection.
pub fn projection_gap(phi: &dyn ConvexFunction, eps: f64, u: &[f64]) -> Result<Option<f64>> {
    let Some(p) = phi.project_domain(u) else {
        return Ok(None);
    };
    let r = resolvent(phi, eps, u)?;
    let gap: f64 = r
        .resolvent_point
        .iter()
        .zip(&p)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(Some(gap.sqrt()))
}
