use super::{ConvexFunction, Phi, ProxKind};
use crate::error::{Error, Result};

/// `φ(u) = Σ_k φ_k(u_k)` with scalar constituents.
#[derive(Debug, Clone)]
pub struct Separable {
    parts: Vec<Phi>,
}

/// Lifts `d` scalar functions to their coordinatewise sum on `R^d`.
pub fn separable_lift(parts: Vec<Phi>) -> Result<Separable> {
    if parts.is_empty() {
        return Err(Error::usage(
            "separable_lift needs at least one constituent",
        ));
    }
    if let Some(bad) = parts.iter().find(|p| p.dim() != 1) {
        return Err(Error::usage(format!(
            "separable constituent {} is not scalar",
            bad.name()
        )));
    }
    Ok(Separable { parts })
}

impl Separable {
    pub fn parts(&self) -> &[Phi] {
        &self.parts
    }
}

impl ConvexFunction for Separable {
    fn dim(&self) -> usize {
        self.parts.len()
    }

    fn name(&self) -> String {
        let names: Vec<String> = self.parts.iter().map(|p| p.name()).collect();
        format!("separable[{}]", names.join(","))
    }

    fn prox_kind(&self) -> ProxKind {
        ProxKind::Separable
    }

    fn value(&self, u: &[f64]) -> f64 {
        let mut total = 0.0;
        for (p, x) in self.parts.iter().zip(u) {
            let v = p.value(std::slice::from_ref(x));
            if v == f64::INFINITY {
                return f64::INFINITY;
            }
            total += v;
        }
        total
    }

    fn prox_into(&self, eps: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        for (k, p) in self.parts.iter().enumerate() {
            p.prox_into(eps, &u[k..k + 1], &mut out[k..k + 1])?;
        }
        Ok(())
    }

    fn envelope_closed_form(&self, eps: f64, u: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        for (k, p) in self.parts.iter().enumerate() {
            total += p.envelope_closed_form(eps, &u[k..k + 1])?;
        }
        Some(total)
    }

    fn project_domain(&self, u: &[f64]) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(u.len());
        for (k, p) in self.parts.iter().enumerate() {
            out.extend(p.project_domain(&u[k..k + 1])?);
        }
        Some(out)
    }
}
