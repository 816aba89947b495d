//! Derivative-free scalar proximal map for functions without a closed form.

use std::fmt;
use std::sync::Arc;

use super::{ConvexFunction, ProxKind};
use crate::error::{Error, Result};

/// Default golden-section tolerance.
pub const NUMERIC_PROX_TOL: f64 = 1e-10;

const GOLDEN_ITER_CAP: usize = 200;
const EXPANSION_CAP: usize = 64;
const EDGE_BISECTIONS: usize = 80;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimizes `½(u − v)² + ε φ(v)` over scalar `v`.
///
/// Finds a feasible start (`u` itself, or the domain edge between `u` and 0),
/// brackets the minimizer by step doubling, trims infinite bracket ends back
/// to the domain edge, then runs golden-section search until the bracket is
/// narrower than `tol · (1 + |v|)`.
pub fn prox_1d_numeric(phi: &dyn Fn(f64) -> f64, eps: f64, u: f64, tol: f64) -> Result<f64> {
    if !(eps > 0.0) || !(tol > 0.0) || !u.is_finite() {
        return Err(Error::usage(
            "prox_1d_numeric needs eps > 0, tol > 0 and finite u",
        ));
    }
    let g = |v: f64| {
        let p = phi(v);
        if p.is_finite() {
            0.5 * (u - v) * (u - v) + eps * p
        } else {
            f64::INFINITY
        }
    };

    let x0 = feasible_start(phi, u)?;
    let g0 = g(x0);

    let (a, m, b) = bracket(&g, x0, g0, u)?;
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    if !g(lo).is_finite() {
        lo = domain_edge(&g, lo, m);
    }
    if !g(hi).is_finite() {
        hi = domain_edge(&g, hi, m);
    }

    // Comparisons use the factored difference g(c) − g(d) so the quadratic
    // part does not cancel near the minimizer.
    let below = |c: f64, pc: f64, d: f64, pd: f64| {
        let quad = 0.5 * (d - c) * (2.0 * u - c - d);
        let lin = if pc.is_finite() && pd.is_finite() {
            eps * (pc - pd)
        } else if pc.is_finite() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        quad + lin <= 0.0
    };
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut pc = phi(c);
    let mut pd = phi(d);
    for _ in 0..GOLDEN_ITER_CAP {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * (1.0 + mid.abs()) {
            return Ok(mid);
        }
        if below(c, pc, d, pd) {
            hi = d;
            d = c;
            pd = pc;
            c = hi - INV_PHI * (hi - lo);
            pc = phi(c);
        } else {
            lo = c;
            c = d;
            pc = pd;
            d = lo + INV_PHI * (hi - lo);
            pd = phi(d);
        }
    }
    Err(Error::numeric(
        "golden-section search did not reach tolerance",
        hi - lo,
    ))
}

fn feasible_start(phi: &dyn Fn(f64) -> f64, u: f64) -> Result<f64> {
    if phi(u).is_finite() {
        return Ok(u);
    }
    if !phi(0.0).is_finite() {
        return Err(Error::numeric(
            "domain bracket not found: neither u nor 0 is feasible",
            f64::INFINITY,
        ));
    }
    // Domain is an interval containing 0; walk from u toward it.
    let (mut out, mut inside) = (u, 0.0);
    for _ in 0..EDGE_BISECTIONS {
        let mid = 0.5 * (out + inside);
        if mid == out || mid == inside {
            break;
        }
        if phi(mid).is_finite() {
            inside = mid;
        } else {
            out = mid;
        }
    }
    Ok(inside)
}

/// Returns `(a, m, b)` with `g(m) ≤ min(g(a), g(b))`, so the minimizer of the
/// convex `g` lies between `a` and `b`.
fn bracket(g: &dyn Fn(f64) -> f64, x0: f64, g0: f64, u: f64) -> Result<(f64, f64, f64)> {
    let mut h = (u - x0).abs().max(1e-3 * (1.0 + x0.abs()));
    let gl = g(x0 - h);
    let gr = g(x0 + h);
    if gl >= g0 && gr >= g0 {
        return Ok((x0 - h, x0, x0 + h));
    }
    let dir = if gr < g0 { 1.0 } else { -1.0 };
    let (mut a, mut m) = (x0, x0 + dir * h);
    let mut gm = if dir > 0.0 { gr } else { gl };
    for _ in 0..EXPANSION_CAP {
        h *= 2.0;
        let p = m + dir * h;
        let gp = g(p);
        if gp >= gm {
            return Ok((a, m, p));
        }
        a = m;
        m = p;
        gm = gp;
    }
    Err(Error::numeric(
        "domain bracket not found within expansion cap",
        h,
    ))
}

/// Bisects between an infeasible `out` and feasible `inside`, returning the
/// feasible side of the domain edge.
fn domain_edge(g: &dyn Fn(f64) -> f64, mut out: f64, mut inside: f64) -> f64 {
    for _ in 0..EDGE_BISECTIONS {
        let mid = 0.5 * (out + inside);
        if mid == out || mid == inside {
            break;
        }
        if g(mid).is_finite() {
            inside = mid;
        } else {
            out = mid;
        }
    }
    inside
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar convex function whose resolvent is computed by [`prox_1d_numeric`].
#[derive(Clone)]
pub struct NumericScalar {
    name: String,
    f: ScalarFn,
    tol: f64,
}

impl NumericScalar {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        NumericScalar {
            name: name.into(),
            f: Arc::new(f),
            tol: NUMERIC_PROX_TOL,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

impl fmt::Debug for NumericScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NumericScalar")
            .field("name", &self.name)
            .field("tol", &self.tol)
            .finish()
    }
}

impl ConvexFunction for NumericScalar {
    fn dim(&self) -> usize {
        1
    }
    fn name(&self) -> String {
        self.name.clone()
    }
    fn prox_kind(&self) -> ProxKind {
        ProxKind::Numeric1d
    }
    fn value(&self, u: &[f64]) -> f64 {
        (self.f)(u[0])
    }
    fn prox_into(&self, eps: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = prox_1d_numeric(&*self.f, eps, u[0], self.tol)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection on the monotone optimality map `v − u + ε φ'(v)`.
    fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn soft_threshold_cases() {
        let abs = |v: f64| v.abs();
        let v = prox_1d_numeric(&abs, 1.0, 0.5, NUMERIC_PROX_TOL).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
        let v = prox_1d_numeric(&abs, 1.0, 3.0, NUMERIC_PROX_TOL).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn quartic_matches_bisection_oracle() {
        // Optimality: v + 0.4 v³ = 1 for φ = v⁴, ε = 0.1, u = 1.
        let oracle = bisect_root(|v| v + 0.4 * v.powi(3) - 1.0, 0.0, 1.0);
        let v = prox_1d_numeric(&|v: f64| v.powi(4), 0.1, 1.0, NUMERIC_PROX_TOL).unwrap();
        assert!((v - oracle).abs() <= 1e-8, "{v} vs {oracle}");
    }

    #[test]
    fn quadratic_grid_matches_closed_form() {
        let mut worst: f64 = 0.0;
        for ic in 0..5 {
            for ie in 0..4 {
                for iu in 0..5 {
                    let c = 0.25 + ic as f64;
                    let eps = [0.01, 0.1, 1.0, 5.0][ie];
                    let u = -10.0 + 5.0 * iu as f64;
                    let f = move |v: f64| 0.5 * c * v * v;
                    let v = prox_1d_numeric(&f, eps, u, NUMERIC_PROX_TOL).unwrap();
                    worst = worst.max((v - u / (1.0 + eps * c)).abs());
                }
            }
        }
        assert!(worst <= 1e-6, "worst deviation {worst}");
    }

    #[test]
    fn indicator_from_infeasible_start() {
        let ind = |v: f64| if v >= 0.0 { 0.0 } else { f64::INFINITY };
        let v = prox_1d_numeric(&ind, 1.0, -3.0, NUMERIC_PROX_TOL).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
        let v = prox_1d_numeric(&ind, 1.0, 2.5, NUMERIC_PROX_TOL).unwrap();
        assert!((v - 2.5).abs() < 1e-9, "{v}");
    }

    #[test]
    fn interval_domain_away_from_zero_side() {
        // Indicator of [-1, 2] plus a linear-quadratic term.
        let f = |v: f64| {
            if (-1.0..=2.0).contains(&v) {
                0.5 * v * v
            } else {
                f64::INFINITY
            }
        };
        let v = prox_1d_numeric(&f, 1.0, 10.0, NUMERIC_PROX_TOL).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
        let v = prox_1d_numeric(&f, 1.0, -10.0, NUMERIC_PROX_TOL).unwrap();
        assert!((v + 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn infeasible_everywhere_is_a_numeric_error() {
        let f = |v: f64| if v > 5.0 { 0.0 } else { f64::INFINITY };
        let err = prox_1d_numeric(&f, 1.0, -1.0, NUMERIC_PROX_TOL).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }

    #[test]
    fn large_arguments_converge() {
        let v = prox_1d_numeric(&|v: f64| v.abs(), 2.0, 1e6, NUMERIC_PROX_TOL).unwrap();
        assert!((v - (1e6 - 2.0)).abs() < 1e-3);
    }
}
