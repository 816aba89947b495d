//! Closed-form instances: zero, quadratic, scaled absolute value, indicators
//! of a box / halfspace / centered ball, and the one-sided quadratic penalty.

use super::{dot, norm_sq, ConvexFunction, ProxKind};
use crate::error::{Error, Result};

/// `φ ≡ 0`.
#[derive(Debug, Clone)]
pub struct Zero {
    dim: usize,
}

impl Zero {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Zero { dim }
    }
}

impl ConvexFunction for Zero {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        "zero".into()
    }
    fn prox_kind(&self) -> ProxKind {
        ProxKind::ClosedForm
    }
    fn value(&self, _u: &[f64]) -> f64 {
        0.0
    }
    fn prox_into(&self, _eps: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(u);
        Ok(())
    }
    fn envelope_closed_form(&self, _eps: f64, _u: &[f64]) -> Option<f64> {
        Some(0.0)
    }
    fn project_domain(&self, u: &[f64]) -> Option<Vec<f64>> {
        Some(u.to_vec())
    }
}

/// `φ(u) = ½ c |u|²`, `c ≥ 0`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    dim: usize,
    c: f64,
}

impl Quadratic {
    pub fn new(dim: usize, c: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::config("quadratic coefficient must be nonnegative"));
        }
        Ok(Quadratic { dim, c })
    }

    pub fn coefficient(&self) -> f64 {
        self.c
    }
}

impl ConvexFunction for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        format!("quadratic(c={})", self.c)
    }
    fn prox_kind(&self) -> ProxKind {
        ProxKind::ClosedForm
    }
    fn value(&self, u: &[f64]) -> f64 {
        0.5 * self.c * norm_sq(u)
    }
    fn prox_into(&self, eps: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        let s = 1.0 / (1.0 + eps * self.c);
        for (o, x) in out.iter_mut().zip(u) {
            *o = x * s;
        }
        Ok(())
    }
    fn envelope_closed_form(&self, eps: f64, u: &[f64]) -> Option<f64> {
        let ec = eps * self.c;
        Some(0.5 * norm_sq(u) * ec / (1.0 + ec))
    }
    fn project_domain(&self, u: &[f64]) -> Option<Vec<f64>> {
        Some(u.to_vec())
    }
}

/// `φ(u) = c Σ_k |u_k|`, `c ≥ 0`. The resolvent is soft thresholding.
#[derive(Debug, Clone)]
pub struct AbsValue {
    dim: usize,
    c: f64,
}

impl AbsValue {
    pub fn new(dim: usize, c: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::config("absolute-value scale must be nonnegative"));
        }
        Ok(AbsValue { dim, c })
    }
}

impl ConvexFunction for AbsValue {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        format!("abs(c={})", self.c)
    }
    fn prox_kind(&self) -> ProxKind {
        ProxKind::ClosedForm
    }
    fn value(&self, u: &[f64]) -> f64 {
        self.c * u.iter().map(|x| x.abs()).sum::<f64>()
    }
    fn prox_into(&self, eps: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        let t = eps * self.c;
        for (o, &x) in out.iter_mut().zip(u) {
            *o = x.signum() * (x.abs() - t).max(0.0);
        }
        Ok(())
    }
    fn envelope_closed_form(&self, eps: f64, u: &[f64]) -> Option<f64> {
        // Huber function per coordinate.
        let t = eps * self.c;
        Some(
            u.iter()
                .map(|x| {
                    let a = x.abs();
                    if a <= t {
                        0.5 * a * a
                    } else {
                        t * a - 0.5 * t * t
                    }
                })
                .sum(),
        )
    }
    fn project_domain(&self, u: &[f64]) -> Option<Vec<f64>> {
        Some(u.to_vec())
    }
}

/// Indicator of the box `[lo, hi]` (bounds may be infinite). Must contain 0.
#[derive(Debug, Clone)]
pub struct BoxIndicator {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxIndicator {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::config(
                "box bounds must be nonempty and of equal length",
            ));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if l.is_nan() || h.is_nan() || *l > 0.0 || *h < 0.0 {
                return Err(Error::config("box must contain the origin"));
            }
        }
        Ok(BoxIndicator { lo, hi })
    }

    /// Indicator of `[0, ∞)^d`.
    pub fn nonnegative(dim: usize) -> Self {
        BoxIndicator {
            lo: vec![0.0; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    fn project(&self, u: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = u[k].max(self.lo[k]).min(self.hi[k]);
        }
    }
}

impl ConvexFunction for BoxIndicator {
    fn dim(&self) -> usize {
        self.lo.len()
    }
    fn name(&self) -> String {
        if self.lo.iter().all(|&l| l == 0.0) && self.hi.iter().all(|h| h.is_infinite()) {
            "indicator[0,inf)".into()
        } else {
            "indicator(box)".into()
        }
    }
    fn prox_kind(&self) -> ProxKind {
        ProxKind::ClosedForm
    }
    fn value(&self, u: &[f64]) -> f64 {
        let inside = u
            .iter()
            .enumerate()
            .all(|(k, &x)| x >= self.lo[k] && x <= self.hi[k]);
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }
    fn prox_into(&self, _eps: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.project(u, out);
        Ok(())
    }
    fn envelope_closed_form(&self, _eps: f64, u: &[f64]) -> Option<f64> {
        let mut p = vec![0.0; u.len()];
        self.project(u, &mut p);
        Some(
            0.5 * u
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>(),
        )
    }
    fn project_domain(&self, u: &[f64]) -> Option<Vec<f64>> {
        let mut p = vec![0.0; u.len()];
        self.project(u, &mut p);
        Some(p)
    }
}

/// Indicator of `{u : ⟨a, u⟩ ≤ b}` with `b ≥ 0`.
#[derive(Debug, Clone)]
pub struct HalfspaceIndicator {
    normal: Vec<f64>,
    offset: f64,
    normal_sq: f64,
}

impl HalfspaceIndicator {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let normal_sq = norm_sq(&normal);
        if normal.is_empty() || !(normal_sq > 0.0 && normal_sq.is_finite()) {
            return Err(Error::config(
                "halfspace normal must be a nonzero finite vector",
            ));
        }
        if !(offset >= 0.0) {
            return Err(Error::config("halfspace offset must be nonnegative"));
        }
        Ok(HalfspaceIndicator {
            normal,
            offset,
            normal_sq,
        })
    }

    fn excess(&self, u: &[f64]) -> f64 {
        (dot(&self.normal, u) - self.offset).max(0.0)
    }
}

impl ConvexFunction for HalfspaceIndicator {
    fn dim(&self) -> usize {
        self.normal.len()
    }
    fn name(&self) -> String {
        "indicator(halfspace)".into()
    }
    fn prox_kind(&self) -> ProxKind {
        ProxKind::ClosedForm
    }
    fn value(&self, u: &[f64]) -> f64 {
        let slack = MEMBERSHIP_TOL * (self.offset + norm_sq(u).sqrt() * self.normal_sq.sqrt());
        if dot(&self.normal, u) <= self.offset + slack {
            0.0
        } else {
            f64::INFINITY
        }
    }
    fn prox_into(&self, _eps: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        let s = self.excess(u) / self.normal_sq;
        for ((o, x), a) in out.iter_mut().zip(u).zip(&self.normal) {
            *o = x - s * a;
        }
        Ok(())
    }
    fn envelope_closed_form(&self, _eps: f64, u: &[f64]) -> Option<f64> {
        let e = self.excess(u);
        Some(0.5 * e * e / self.normal_sq)
    }
    fn project_domain(&self, u: &[f64]) -> Option<Vec<f64>> {
        let mut p = vec![0.0; u.len()];
        self.prox_into(1.0, u, &mut p).ok()?;
        Some(p)
    }
}

/// Relative rounding allowance in the membership tests of curved and
/// oblique sets, so that computed projections count as members.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Indicator of the closed ball of radius `r` centered at the origin.
#[derive(Debug, Clone)]
pub struct BallIndicator {
    dim: usize,
    radius: f64,
}

impl BallIndicator {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if !(radius > 0.0) {
            return Err(Error::config("ball radius must be positive"));
        }
        Ok(BallIndicator { dim, radius })
    }
}

impl ConvexFunction for BallIndicator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        format!("indicator(ball r={})", self.radius)
    }
    fn prox_kind(&self) -> ProxKind {
        ProxKind::ClosedForm
    }
    fn value(&self, u: &[f64]) -> f64 {
        if norm_sq(u).sqrt() <= self.radius * (1.0 + MEMBERSHIP_TOL) {
            0.0
        } else {
            f64::INFINITY
        }
    }
    fn prox_into(&self, _eps: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        let n = norm_sq(u).sqrt();
        let s = if n > self.radius {
            self.radius / n
        } else {
            1.0
        };
        for (o, x) in out.iter_mut().zip(u) {
            *o = x * s;
        }
        Ok(())
    }
    fn envelope_closed_form(&self, _eps: f64, u: &[f64]) -> Option<f64> {
        let d = (norm_sq(u).sqrt() - self.radius).max(0.0);
        Some(0.5 * d * d)
    }
    fn project_domain(&self, u: &[f64]) -> Option<Vec<f64>> {
        let mut p = vec![0.0; u.len()];
        self.prox_into(1.0, u, &mut p).ok()?;
        Some(p)
    }
}

/// `φ(u) = c Σ_k max(−u_k, 0)²`: a smooth one-sided penalty for `u ≥ 0`.
#[derive(Debug, Clone)]
pub struct PositivePartPower {
    dim: usize,
    c: f64,
}

impl PositivePartPower {
    pub fn new(dim: usize, c: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::config("penalty coefficient must be nonnegative"));
        }
        Ok(PositivePartPower { dim, c })
    }
}

impl ConvexFunction for PositivePartPower {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        format!("pospower(c={})", self.c)
    }
    fn prox_kind(&self) -> ProxKind {
        ProxKind::ClosedForm
    }
    fn value(&self, u: &[f64]) -> f64 {
        self.c
            * u.iter()
                .map(|&x| {
                    let n = (-x).max(0.0);
                    n * n
                })
                .sum::<f64>()
    }
    fn prox_into(&self, eps: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        let s = 1.0 / (1.0 + 2.0 * eps * self.c);
        for (o, &x) in out.iter_mut().zip(u) {
            *o = if x >= 0.0 { x } else { x * s };
        }
        Ok(())
    }
    fn envelope_closed_form(&self, eps: f64, u: &[f64]) -> Option<f64> {
        let ec = eps * self.c;
        Some(
            u.iter()
                .filter(|&&x| x < 0.0)
                .map(|&x| x * x * ec / (1.0 + 2.0 * ec))
                .sum(),
        )
    }
    fn project_domain(&self, u: &[f64]) -> Option<Vec<f64>> {
        Some(u.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::resolvent;

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(Quadratic::new(1, -1.0).is_err());
        assert!(AbsValue::new(0, 1.0).is_err());
        assert!(BoxIndicator::new(vec![1.0], vec![2.0]).is_err());
        assert!(HalfspaceIndicator::new(vec![0.0, 0.0], 1.0).is_err());
        assert!(HalfspaceIndicator::new(vec![1.0], -0.5).is_err());
        assert!(BallIndicator::new(2, 0.0).is_err());
        assert!(PositivePartPower::new(1, f64::NAN).is_err());
    }

    #[test]
    fn soft_threshold_values() {
        let f = AbsValue::new(1, 1.0).unwrap();
        assert_eq!(
            resolvent(&f, 1.0, &[0.5]).unwrap().resolvent_point,
            vec![0.0]
        );
        assert_eq!(
            resolvent(&f, 1.0, &[3.0]).unwrap().resolvent_point,
            vec![2.0]
        );
        assert_eq!(
            resolvent(&f, 1.0, &[-3.0]).unwrap().resolvent_point,
            vec![-2.0]
        );
    }

    #[test]
    fn halfspace_projection_lands_on_boundary() {
        let h = HalfspaceIndicator::new(vec![1.0, 1.0], 1.0).unwrap();
        let r = resolvent(&h, 0.1, &[3.0, 2.0]).unwrap();
        let s: f64 = r.resolvent_point.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert_eq!(h.value(&r.resolvent_point), 0.0);
    }

    #[test]
    fn ball_projection_scales_radially() {
        let b = BallIndicator::new(2, 1.0).unwrap();
        let r = resolvent(&b, 0.1, &[3.0, 4.0]).unwrap();
        assert!((r.resolvent_point[0] - 0.6).abs() < 1e-15);
        assert!((r.resolvent_point[1] - 0.8).abs() < 1e-15);
        assert!((r.envelope_value - 8.0).abs() < 1e-12);
    }

    #[test]
    fn positive_part_power_prox() {
        let p = PositivePartPower::new(1, 2.0).unwrap();
        // v = u / (1 + 2 ε c) on the negative side.
        let r = resolvent(&p, 0.25, &[-3.0]).unwrap();
        assert!((r.resolvent_point[0] + 1.5).abs() < 1e-15);
        let r = resolvent(&p, 0.25, &[3.0]).unwrap();
        assert_eq!(r.resolvent_point[0], 3.0);
        assert_eq!(r.envelope_value, 0.0);
    }

    #[test]
    fn closed_form_envelopes_match_definition() {
        let fs: Vec<Box<dyn ConvexFunction>> = vec![
            Box::new(Quadratic::new(2, 1.5).unwrap()),
            Box::new(AbsValue::new(2, 0.7).unwrap()),
            Box::new(BoxIndicator::new(vec![-1.0, 0.0], vec![2.0, f64::INFINITY]).unwrap()),
            Box::new(HalfspaceIndicator::new(vec![1.0, -2.0], 0.5).unwrap()),
            Box::new(BallIndicator::new(2, 1.5).unwrap()),
            Box::new(PositivePartPower::new(2, 0.8).unwrap()),
        ];
        let pts = [[3.0, -1.0], [-0.2, 0.4], [-4.0, -5.0], [0.0, 0.0]];
        for f in &fs {
            for eps in [1.0, 0.1, 0.01] {
                for u in &pts {
                    let mut j = [0.0; 2];
                    f.prox_into(eps, u, &mut j).unwrap();
                    let d2 = (u[0] - j[0]).powi(2) + (u[1] - j[1]).powi(2);
                    let by_def = 0.5 * d2 + eps * f.value(&j);
                    let closed = f.envelope_closed_form(eps, u).unwrap();
                    assert!(
                        (by_def - closed).abs() < 1e-12,
                        "{} eps={eps} u={u:?}: {by_def} vs {closed}",
                        f.name()
                    );
                }
            }
        }
    }
}
