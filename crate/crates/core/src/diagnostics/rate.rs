use crate::error::{Error, Result};
use crate::stats::{fit_line, LineFit};

/// Log-log fit of squared distances against `ε` (or `ε + ε′`).
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub abscissae: Vec<f64>,
    pub ordinates: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl RateFit {
    /// Slopes of the fit restricted to each consecutive pair of points.
    pub fn running_slopes(&self) -> Vec<f64> {
        self.abscissae
            .windows(2)
            .zip(self.ordinates.windows(2))
            .map(|(x, y)| (y[1] / y[0]).ln() / (x[1] / x[0]).ln())
            .collect()
    }
}

/// Fits `ln y = slope · ln x + intercept`.
///
/// Needs at least three points with strictly decreasing abscissae. Zero or
/// non-finite ordinates carry no rate information and are reported as
/// [`Error::Degenerate`].
pub fn fit_rate(abscissae: &[f64], ordinates: &[f64]) -> Result<RateFit> {
    if abscissae.len() != ordinates.len() {
        return Err(Error::usage(
            "rate fit needs as many ordinates as abscissae",
        ));
    }
    if abscissae.len() < 3 {
        return Err(Error::usage(format!(
            "rate fit needs at least 3 points, got {}",
            abscissae.len()
        )));
    }
    if abscissae.iter().any(|x| !(*x > 0.0)) || abscissae.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::usage(
            "rate abscissae must be positive and strictly decreasing",
        ));
    }
    if ordinates.iter().any(|y| !(y.is_finite() && *y > 0.0)) {
        return Err(Error::Degenerate(format!(
            "distances {ordinates:?} include zero or non-finite values; the rate is undefined"
        )));
    }
    let lx: Vec<f64> = abscissae.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ordinates.iter().map(|y| y.ln()).collect();
    let LineFit {
        slope,
        intercept,
        r_squared,
    } = fit_line(&lx, &ly);
    Ok(RateFit {
        abscissae: abscissae.to_vec(),
        ordinates: ordinates.to_vec(),
        slope,
        intercept,
        r_squared,
    })
}
