//! Drivers `F(t, y, z)` with their structural constants, and terminal conditions.
//!
//! The `z` argument passed to a driver is the `d × d` matrix `Z Q^{1/2}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sim::MartingaleEnsemble;

/// Violations up to this size are attributed to rounding.
pub const GENERATOR_SLACK_TOL: f64 = 1e-9;

type DriverFn = Arc<dyn Fn(f64, &[f64], &DMatrix<f64>) -> Vec<f64> + Send + Sync>;
type EtaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A driver with declared monotonicity (`alpha`), z-Lipschitz (`beta`) and
/// growth (`gamma`, `eta`) constants.
#[derive(Clone)]
pub struct Generator {
    name: String,
    dim: Option<usize>,
    f: DriverFn,
    eta: EtaFn,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("name", &self.name)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("gamma", &self.gamma)
            .finish()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Generator {
    pub fn custom(
        name: impl Into<String>,
        alpha: f64,
        beta: f64,
        gamma: f64,
        eta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f: impl Fn(f64, &[f64], &DMatrix<f64>) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(beta >= 0.0 && gamma >= 0.0 && alpha.is_finite()) {
            return Err(Error::config(
                "generator needs finite alpha and beta, gamma >= 0",
            ));
        }
        Ok(Generator {
            name: name.into(),
            dim: None,
            f: Arc::new(f),
            eta: Arc::new(eta),
            alpha,
            beta,
            gamma,
        })
    }

    pub fn zero() -> Self {
        Generator::custom("zero", 0.0, 0.0, 0.0, |_| 0.0, |_, y, _| vec![0.0; y.len()])
            .expect("valid constants")
    }

    /// `F = c`, a deterministic forcing.
    pub fn constant(c: Vec<f64>) -> Self {
        let size = norm(&c);
        let dim = c.len();
        let mut g = Generator::custom(
            "constant",
            0.0,
            0.0,
            0.0,
            move |_| size,
            move |_, _, _| c.clone(),
        )
        .expect("valid constants");
        g.dim = Some(dim);
        g
    }

    /// `F = a·y + b·z·w + c` with `α = a`, `β = |b|·|w|`, `γ = |a|`, `η = |c|`.
    pub fn linear(a: f64, b: f64, w: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if w.len() != c.len() {
            return Err(Error::config(
                "linear generator: w and c must have equal length",
            ));
        }
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::config("linear generator: a and b must be finite"));
        }
        let dim = w.len();
        let beta = b.abs() * norm(&w);
        let size = norm(&c);
        let mut g = Generator::custom(
            "linear",
            a,
            beta,
            a.abs(),
            move |_| size,
            move |_, y, z| {
                let mut out: Vec<f64> = y.iter().zip(&c).map(|(yk, ck)| a * yk + ck).collect();
                if b != 0.0 {
                    for (k, o) in out.iter_mut().enumerate() {
                        let zw: f64 = (0..w.len()).map(|j| z[(k, j)] * w[j]).sum();
                        *o += b * zw;
                    }
                }
                out
            },
        )?;
        g.dim = Some(dim);
        Ok(g)
    }

    /// `F = A y`. `α` is the largest eigenvalue of the symmetric part of `A`.
    pub fn matrix_linear(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::config(
                "matrix generator needs a nonempty square matrix",
            ));
        }
        let sym = (&a + a.transpose()) * 0.5;
        let alpha = SymmetricEigen::new(sym).eigenvalues.max();
        let gamma = a.clone().svd(false, false).singular_values.max();
        let dim = a.nrows();
        let mut g = Generator::custom(
            "matrix_linear",
            alpha,
            0.0,
            gamma,
            |_| 0.0,
            move |_, y, _| {
                (0..y.len())
                    .map(|i| (0..y.len()).map(|j| a[(i, j)] * y[j]).sum())
                    .collect()
            },
        )?;
        g.dim = Some(dim);
        Ok(g)
    }

    /// `F = sin(y) + z·w` coordinatewise, with `α = 1`, `β = |w|`, `γ = 1`, `η = 0`.
    pub fn sine(w: Vec<f64>) -> Self {
        let beta = norm(&w);
        let dim = w.len();
        let mut g = Generator::custom(
            "sine",
            1.0,
            beta,
            1.0,
            |_| 0.0,
            move |_, y, z| {
                y.iter()
                    .enumerate()
                    .map(|(k, yk)| yk.sin() + (0..w.len()).map(|j| z[(k, j)] * w[j]).sum::<f64>())
                    .collect()
            },
        )
        .expect("valid constants");
        g.dim = Some(dim);
        g
    }

    pub fn with_eta(mut self, eta: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.eta = Arc::new(eta);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Dimension the driver is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn eta(&self, t: f64) -> f64 {
        (self.eta)(t)
    }

    pub fn eval(&self, t: f64, y: &[f64], z: &DMatrix<f64>) -> Vec<f64> {
        (self.f)(t, y, z)
    }

    /// Evaluates and rejects non-finite output.
    pub fn eval_checked(&self, t: f64, y: &[f64], z: &DMatrix<f64>) -> Result<Vec<f64>> {
        let out = self.eval(t, y, z);
        if out.len() != y.len() {
            return Err(Error::Generator {
                message: format!(
                    "{} returned {} components for a {}-vector",
                    self.name,
                    out.len(),
                    y.len()
                ),
                t,
                y: y.to_vec(),
            });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Generator {
                message: format!("{} returned a non-finite value", self.name),
                t,
                y: y.to_vec(),
            });
        }
        Ok(out)
    }
}

/// `λ = 2α + β² + margin`.
pub fn admissible_lambda(alpha: f64, beta: f64, margin: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::usage("lambda margin must be positive"));
    }
    Ok(2.0 * alpha + beta * beta + margin)
}

/// Box sample used by [`validate_generator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub dim: usize,
    pub half_width: f64,
    pub n_samples: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(dim: usize) -> Self {
        SampleSpec {
            dim,
            half_width: 10.0,
            n_samples: 10_000,
            horizon: 1.0,
            seed: 0,
        }
    }
}

/// Worst slack of each sampled structural inequality; negative means violated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorReport {
    /// `α|y − y′|² − ⟨F(t,y,z) − F(t,y′,z), y − y′⟩`.
    pub monotonicity: f64,
    /// `β‖z − z′‖ − |F(t,y,z) − F(t,y,z′)|`.
    pub lipschitz: f64,
    /// `η(t) + γ|y| − |F(t,y,0)|`.
    pub growth: f64,
}

impl GeneratorReport {
    pub fn admissible(&self) -> bool {
        self.monotonicity >= -GENERATOR_SLACK_TOL
            && self.lipschitz >= -GENERATOR_SLACK_TOL
            && self.growth >= -GENERATOR_SLACK_TOL
    }
}

pub fn validate_generator(f: &Generator, spec: &SampleSpec) -> Result<GeneratorReport> {
    if !(spec.half_width > 0.0 && spec.half_width.is_finite()) || spec.dim == 0 {
        return Err(Error::usage(
            "generator sample box must be bounded and nonempty",
        ));
    }
    if let Some(d) = f.dim {
        if d != spec.dim {
            return Err(Error::usage(format!(
                "generator {} has dimension {d}, sample has {}",
                f.name, spec.dim
            )));
        }
    }
    let d = spec.dim;
    let hw = spec.half_width;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vec = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-hw..=hw)).collect()
    };
    let zero = DMatrix::zeros(d, d);
    let mut report = GeneratorReport {
        monotonicity: f64::INFINITY,
        lipschitz: f64::INFINITY,
        growth: f64::INFINITY,
    };
    for _ in 0..spec.n_samples {
        let t = rng.random_range(0.0..=spec.horizon);
        let y = vec(&mut rng, d);
        let y2 = vec(&mut rng, d);
        let z = DMatrix::from_vec(d, d, vec(&mut rng, d * d));
        let z2 = DMatrix::from_vec(d, d, vec(&mut rng, d * d));

        let fy = f.eval_checked(t, &y, &z)?;
        let fy2 = f.eval_checked(t, &y2, &z)?;
        let fz2 = f.eval_checked(t, &y, &z2)?;
        let f0 = f.eval_checked(t, &y, &zero)?;

        let dy: Vec<f64> = y.iter().zip(&y2).map(|(a, b)| a - b).collect();
        let inner: f64 = fy
            .iter()
            .zip(&fy2)
            .zip(&dy)
            .map(|((a, b), c)| (a - b) * c)
            .sum();
        let mono = f.alpha * dy.iter().map(|x| x * x).sum::<f64>() - inner;

        let df: Vec<f64> = fy.iter().zip(&fz2).map(|(a, b)| a - b).collect();
        let lip = f.beta * (&z - &z2).norm() - norm(&df);

        let growth = f.eta(t) + f.gamma * norm(&y) - norm(&f0);

        report.monotonicity = report.monotonicity.min(mono);
        report.lipschitz = report.lipschitz.min(lip);
        report.growth = report.growth.min(growth);
    }
    Ok(report)
}

type PathFn = Arc<dyn Fn(&[f64], usize) -> Vec<f64> + Send + Sync>;
type PointMap = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type PointFn = Arc<PointMap>;

/// Terminal value `ξ` as a functional of the driving path.
#[derive(Clone)]
pub struct TerminalCondition {
    name: String,
    dim: usize,
    pointwise: Option<PointFn>,
    path: PathFn,
}

impl fmt::Debug for TerminalCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalCondition")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

impl TerminalCondition {
    /// `ξ = g(M(T))`.
    pub fn pointwise(
        name: impl Into<String>,
        dim: usize,
        g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        let g: PointFn = Arc::new(g);
        let g2 = g.clone();
        TerminalCondition {
            name: name.into(),
            dim,
            pointwise: Some(g),
            path: Arc::new(move |incs, d| {
                let mut m = vec![0.0; d];
                for inc in incs.chunks(d) {
                    for (a, b) in m.iter_mut().zip(inc) {
                        *a += b;
                    }
                }
                g2(&m)
            }),
        }
    }

    /// `ξ = f(ΔM_0, …, ΔM_{N−1})`, with the increments passed flattened.
    pub fn path_functional(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(&[f64], usize) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        TerminalCondition {
            name: name.into(),
            dim,
            pointwise: None,
            path: Arc::new(f),
        }
    }

    pub fn constant(c: Vec<f64>) -> Self {
        let dim = c.len();
        TerminalCondition::pointwise("constant", dim, move |_| c.clone())
    }

    /// `ξ = shift + scale·M(T)`.
    pub fn affine(shift: Vec<f64>, scale: f64) -> Self {
        let dim = shift.len();
        TerminalCondition::pointwise("affine", dim, move |m| {
            m.iter().zip(&shift).map(|(x, s)| s + scale * x).collect()
        })
    }

    /// `ξ = M(T)`.
    pub fn terminal_value(dim: usize) -> Self {
        let mut t = TerminalCondition::affine(vec![0.0; dim], 1.0);
        t.name = "terminal_value".into();
        t
    }

    /// `ξ = (shift + scale·M(T))⁺` coordinatewise.
    pub fn positive_part(shift: Vec<f64>, scale: f64) -> Self {
        let dim = shift.len();
        TerminalCondition::pointwise("positive_part", dim, move |m| {
            m.iter()
                .zip(&shift)
                .map(|(x, s)| (s + scale * x).max(0.0))
                .collect()
        })
    }

    /// `ξ = M(T)^k` coordinatewise.
    pub fn power(dim: usize, k: i32) -> Self {
        TerminalCondition::pointwise(format!("power{k}"), dim, move |m| {
            m.iter().map(|x| x.powi(k)).collect()
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The map `g` when `ξ = g(M(T))`.
    pub fn pointwise_map(&self) -> Option<&PointMap> {
        self.pointwise.as_deref()
    }

    pub fn evaluate_path(&self, increments: &[f64], d: usize) -> Vec<f64> {
        (self.path)(increments, d)
    }

    /// `ξ` on path `p`, rejecting non-finite values.
    pub fn evaluate(&self, ens: &MartingaleEnsemble, p: usize) -> Result<Vec<f64>> {
        let v = self.evaluate_path(ens.path(p), ens.dim());
        if v.len() != self.dim {
            return Err(Error::config(format!(
                "terminal condition {} produced {} components, expected {}",
                self.name,
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::config(format!(
                "terminal condition {} is not finite on path {p}",
                self.name
            )));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_ensemble, CovarianceSpec, TimeGrid};

    #[test]
    fn lambda_arithmetic() {
        assert_eq!(admissible_lambda(0.0, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(admissible_lambda(-1.0, 0.0, 0.5).unwrap(), -1.5);
        assert!((admissible_lambda(1.0, 2.0, 0.1).unwrap() - 6.1).abs() < 1e-15);
        assert!(admissible_lambda(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_generator_is_admissible() {
        let r = validate_generator(&Generator::zero(), &SampleSpec::new(2)).unwrap();
        assert!(r.admissible());
        assert_eq!(r.monotonicity, 0.0);
    }

    #[test]
    fn minus_identity_has_zero_monotonicity_slack() {
        let g = Generator::linear(-1.0, 0.0, vec![0.0], vec![0.0]).unwrap();
        assert_eq!((g.alpha, g.beta, g.gamma), (-1.0, 0.0, 1.0));
        let r = validate_generator(&g, &SampleSpec::new(1)).unwrap();
        assert!(r.monotonicity.abs() < 1e-12, "{r:?}");
        assert!(r.admissible());
    }

    #[test]
    fn sine_generator_with_unit_eta() {
        let g = Generator::sine(vec![1.0]).with_eta(|_| 1.0);
        let r = validate_generator(&g, &SampleSpec::new(1)).unwrap();
        assert!(r.admissible(), "{r:?}");
    }

    #[test]
    fn understated_constant_is_detected() {
        let mut g = Generator::linear(2.0, 0.0, vec![0.0], vec![0.0]).unwrap();
        g.alpha = 1.0;
        let r = validate_generator(&g, &SampleSpec::new(1)).unwrap();
        assert!(!r.admissible());
    }

    #[test]
    fn shipped_generators_pass_with_declared_constants() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.0, -1.0]);
        let gens = vec![
            Generator::zero(),
            Generator::constant(vec![-0.5, 1.0]),
            Generator::linear(0.3, -0.7, vec![1.0, 2.0], vec![1.0, -1.0]).unwrap(),
            Generator::matrix_linear(a).unwrap(),
            Generator::sine(vec![0.5, 0.5]),
        ];
        for g in &gens {
            let r = validate_generator(g, &SampleSpec::new(2)).unwrap();
            assert!(r.admissible(), "{}: {r:?}", g.name());
        }
    }

    #[test]
    fn non_finite_output_is_a_generator_error() {
        let g = Generator::custom(
            "bad",
            0.0,
            0.0,
            0.0,
            |_| 0.0,
            |_, y, _| {
                y.iter()
                    .map(|v| if *v > 5.0 { f64::NAN } else { 0.0 })
                    .collect()
            },
        )
        .unwrap();
        let err = validate_generator(&g, &SampleSpec::new(1)).unwrap_err();
        match err {
            Error::Generator { y, .. } => assert!(y[0] > 5.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn terminal_conditions_on_a_path() {
        let cov = CovarianceSpec::identity(1).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let e = simulate_ensemble(&cov, &grid, 3, 2).unwrap();
        for p in 0..3 {
            let m = e.terminal(p)[0];
            let xi = TerminalCondition::terminal_value(1)
                .evaluate(&e, p)
                .unwrap();
            assert!((xi[0] - m).abs() < 1e-15);
            let pp = TerminalCondition::positive_part(vec![0.5], 1.0)
                .evaluate(&e, p)
                .unwrap();
            assert_eq!(pp[0], (0.5 + xi[0]).max(0.0));
            let cube = TerminalCondition::power(1, 3).evaluate(&e, p).unwrap();
            assert_eq!(cube[0], xi[0].powi(3));
        }
        let c = TerminalCondition::constant(vec![2.0]);
        assert_eq!(c.evaluate(&e, 0).unwrap(), vec![2.0]);
        assert_eq!((c.pointwise_map().unwrap())(&[9.0]), vec![2.0]);
    }
}
