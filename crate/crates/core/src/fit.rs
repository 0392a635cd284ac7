//! Least-squares line fits and Richardson extrapolation for convergence studies.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Domain("fit inputs differ in length".into()));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Domain(format!("need at least two points to fit, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 {
        return Err(Error::Domain("degenerate fit: all abscissae equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Fits `|y| ~ C x^p` on a log-log scale and returns the fit of `ln|y|` on `ln x`.
pub fn power_law_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.iter().chain(y).any(|v| *v == 0.0 || !v.is_finite()) || x.iter().any(|v| *v < 0.0) {
        return Err(Error::Domain("power-law fit needs finite nonzero data and positive abscissae".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    linear_fit(&lx, &ly)
}

/// Exponents `log(|y_i| / |y_{i+1}|) / log(x_{i+1} / x_i)` between neighbors.
pub fn local_exponents(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| (yw[0].abs() / yw[1].abs()).ln() / (xw[1] / xw[0]).ln())
        .collect()
}

/// Richardson extrapolation of `f(h) = f0 + c h^p`: given values at `h` and
/// `h / ratio`, returns the estimate of `f0`.
pub fn richardson(coarse: f64, fine: f64, ratio: f64, order: f64) -> f64 {
    let r = ratio.powf(order);
    (r * fine - coarse) / (r - 1.0)
}

/// Observed convergence order from three solutions at `h`, `h/r`, `h/r^2`.
pub fn observed_order(coarse: f64, medium: f64, fine: f64, ratio: f64) -> f64 {
    ((coarse - medium).abs() / (medium - fine).abs()).ln() / ratio.ln()
}
