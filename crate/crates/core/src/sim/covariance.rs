use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const EIGEN_TOL: f64 = 1e-12;
const DEFAULT_TRACE_BOUND: f64 = 1e8;

type CovFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum Mode {
    Constant(Arc<CovFactor>),
    TimeVarying(CovFn),
}

/// Covariance density `Q(t)` of the driving martingale, `d⟨⟨M⟩⟩_t = Q(t) dt`.
#[derive(Clone)]
pub struct CovarianceSpec {
    dim: usize,
    mode: Mode,
    trace_bound: f64,
}

impl fmt::Debug for CovarianceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match &self.mode {
            Mode::Constant(c) => format!("constant {:?}", c.q.as_slice()),
            Mode::TimeVarying(_) => "time-varying".to_string(),
        };
        f.debug_struct("CovarianceSpec")
            .field("dim", &self.dim)
            .field("mode", &mode)
            .field("trace_bound", &self.trace_bound)
            .finish()
    }
}

/// `Q` together with its symmetric square root and Moore-Penrose inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct CovFactor {
    pub q: DMatrix<f64>,
    pub sqrt: DMatrix<f64>,
    pub pinv: DMatrix<f64>,
    pub trace: f64,
}

impl CovFactor {
    pub fn new(q: DMatrix<f64>, trace_bound: f64) -> Result<Self> {
        let d = q.nrows();
        if d == 0 || q.ncols() != d {
            return Err(Error::config("covariance must be a nonempty square matrix"));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("covariance has non-finite entries"));
        }
        let scale = q.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (q[(i, j)] - q[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::config(format!(
                        "covariance is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let trace = q.trace();
        if trace > trace_bound {
            return Err(Error::config(format!(
                "covariance trace {trace} exceeds bound {trace_bound}"
            )));
        }
        let sym = (&q + q.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let min = eig.eigenvalues.min();
        if min < -EIGEN_TOL * scale {
            return Err(Error::config(format!(
                "covariance is indefinite (smallest eigenvalue {min:e})"
            )));
        }
        let cut = EIGEN_TOL * eig.eigenvalues.max().max(1.0);
        let v = &eig.eigenvectors;
        let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let inv = eig.eigenvalues.map(|l| if l > cut { 1.0 / l } else { 0.0 });
        let sqrt = v * DMatrix::from_diagonal(&root) * v.transpose();
        let pinv = v * DMatrix::from_diagonal(&inv) * v.transpose();
        Ok(CovFactor {
            q,
            sqrt,
            pinv,
            trace,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }
}

impl CovarianceSpec {
    pub fn constant(q: DMatrix<f64>) -> Result<Self> {
        let factor = CovFactor::new(q, DEFAULT_TRACE_BOUND)?;
        Ok(CovarianceSpec {
            dim: factor.dim(),
            mode: Mode::Constant(Arc::new(factor)),
            trace_bound: DEFAULT_TRACE_BOUND,
        })
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::constant(DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(entries),
        ))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::constant(DMatrix::identity(dim, dim))
    }

    /// `Q(t)` given as a function of time; validated at every node it is used on.
    pub fn time_varying(
        dim: usize,
        q: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("covariance dimension must be positive"));
        }
        Ok(CovarianceSpec {
            dim,
            mode: Mode::TimeVarying(Arc::new(q)),
            trace_bound: DEFAULT_TRACE_BOUND,
        })
    }

    pub fn with_trace_bound(mut self, bound: f64) -> Result<Self> {
        if let Mode::Constant(f) = &self.mode {
            if f.trace > bound {
                return Err(Error::config(format!(
                    "covariance trace {} exceeds bound {bound}",
                    f.trace
                )));
            }
        }
        self.trace_bound = bound;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.mode, Mode::Constant(_))
    }

    pub fn factor_at(&self, t: f64) -> Result<Arc<CovFactor>> {
        match &self.mode {
            Mode::Constant(f) => Ok(f.clone()),
            Mode::TimeVarying(q) => {
                let m = q(t);
                if m.nrows() != self.dim {
                    return Err(Error::config(format!(
                        "Q({t}) has dimension {} instead of {}",
                        m.nrows(),
                        self.dim
                    )));
                }
                Ok(Arc::new(CovFactor::new(m, self.trace_bound)?))
            }
        }
    }

    pub fn at(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.factor_at(t)?.q.clone())
    }
}
