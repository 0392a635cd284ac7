//! Complex Gamma function and the Fourier transform of the packet profile.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(z)` on some branch (only `exp` of the result is meaningful for
/// `Re z < 1/2`, where the reflection formula is used).
pub fn ln_gamma(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        let s = (PI * z).sin();
        return Complex64::new(PI.ln(), 0.0) - s.ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS[0], 0.0);
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        x += *c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

pub fn gamma(z: Complex64) -> Complex64 {
    ln_gamma(z).exp()
}

/// Real Gamma function for `x > 0`.
pub fn gamma_real(x: f64) -> f64 {
    gamma(Complex64::new(x, 0.0)).re
}

/// Logarithmic phase strength `alpha` and regularization exponent `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub alpha: f64,
    pub eps: f64,
}

impl GammaParams {
    pub fn new(alpha: f64, eps: f64) -> Result<Self> {
        if !(alpha.is_finite() && eps.is_finite()) {
            return Err(Error::Domain("alpha and eps must be finite".into()));
        }
        if alpha <= 0.0 {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        if eps <= 0.0 || eps > 0.5 {
            return Err(Error::Domain(format!("eps must lie in (0, 1/2], got {eps}")));
        }
        Ok(Self { alpha, eps })
    }

    /// `s = 1 + eps + i alpha`
    pub fn exponent(&self) -> Complex64 {
        Complex64::new(1.0 + self.eps, self.alpha)
    }
}

/// `Gamma_0 = exp(-i pi (i alpha + eps) / 2) Gamma(1 + eps + i alpha)`.
pub fn gamma0(p: &GammaParams) -> Complex64 {
    let w = Complex64::new(p.eps, p.alpha);
    (ln_gamma(p.exponent()) - Complex64::i() * FRAC_PI_2 * w).exp()
}

/// `|Gamma_0|^2`, computed without forming the complex value.
pub fn gamma0_norm_sqr(p: &GammaParams) -> f64 {
    (2.0 * ln_gamma(p.exponent()).re + PI * p.alpha).exp()
}

/// `Gamma_0 = i * int_0^inf y^(i alpha + eps) e^(-i y) dy`, evaluated on the
/// rotated ray `y = t e^(-i theta)`, `0 < theta <= pi/2`, with `t = e^v`.
pub fn gamma0_by_rotation(p: &GammaParams, theta: f64, tol: f64) -> Result<Complex64> {
    if !(theta > 0.0 && theta <= FRAC_PI_2) {
        return Err(Error::Domain(format!("rotation angle {theta} outside (0, pi/2]")));
    }
    let s = p.exponent();
    let (c, sn) = (theta.cos(), theta.sin());
    let v_lo = -60.0 / (1.0 + p.eps);
    let v_hi = (80.0 / sn).ln();
    let res = integrate(
        |v: f64| {
            let t = v.exp();
            // y^s e^{-iy} with y = t e^{-i theta}; dy = y dv
            (s * (v - Complex64::i() * theta) + Complex64::new(-t * sn, -t * c)).exp()
        },
        v_lo,
        v_hi,
        QuadOptions::tight(tol),
    )?;
    Ok(Complex64::i() * res.value)
}

/// Principal argument of `eta + i a` for `eta < 0`: `pi - asin(a / |eta + i a|)`.
pub fn arg_eta_plus_ia(eta: f64, a: f64) -> Result<f64> {
    if !(eta < 0.0) {
        return Err(Error::Domain(format!("eta must be negative, got {eta}")));
    }
    if !(a > 0.0) {
        return Err(Error::Domain(format!("a must be positive, got {a}")));
    }
    Ok(PI - (a / eta.hypot(a)).asin())
}

/// `int_0^inf e^(i sigma eta) sigma^(i alpha + eps) e^(-a sigma) d sigma`
/// for any real `alpha` (no sign restriction), in closed form
/// `Gamma(s) e^(i pi s / 2) / (eta + i a)^s`, principal branch.
pub fn fourier_transform_raw(eta: f64, alpha: f64, eps: f64, a: f64) -> Result<Complex64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("a must be positive, got {a}")));
    }
    if !(eps > -1.0) || !alpha.is_finite() || !eta.is_finite() {
        return Err(Error::Domain("transform requires eps > -1 and finite inputs".into()));
    }
    let s = Complex64::new(1.0 + eps, alpha);
    let z = Complex64::new(eta, a);
    Ok((ln_gamma(s) + Complex64::i() * FRAC_PI_2 * s - s * z.ln()).exp())
}

/// Fourier transform of the packet profile, `tilde C01(-eta)`.
pub fn packet_fourier(eta: f64, p: &GammaParams, a: f64) -> Result<Complex64> {
    fourier_transform_raw(eta, p.alpha, p.eps, a)
}

/// `|Gamma_0|^2 exp(-2 alpha asin(a/|eta+ia|)) / |eta+ia|^(2 eps + 2)` for `eta < 0`.
pub fn packet_fourier_norm_sqr(eta: f64, p: &GammaParams, a: f64) -> Result<f64> {
    let arg = arg_eta_plus_ia(eta, a)?;
    let r2 = eta * eta + a * a;
    Ok(gamma0_norm_sqr(p) * (-2.0 * p.alpha * (PI - arg)).exp() / r2.powf(p.eps + 1.0))
}

/// The defining integral of [`fourier_transform_raw`] by adaptive quadrature,
/// substituting `sigma = e^v` and truncating at `sigma = 40 / a`.
pub fn fourier_transform_quadrature(
    eta: f64,
    alpha: f64,
    eps: f64,
    a: f64,
    tol: f64,
) -> Result<Complex64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("a must be positive, got {a}")));
    }
    let s = Complex64::new(1.0 + eps, alpha);
    let k = Complex64::new(-a, eta);
    let v_hi = (40.0 / a).ln();
    let v_lo = -a.ln() - 45.0 / (1.0 + eps);
    // split so each panel sees a bounded number of oscillations
    let mut points = vec![v_lo];
    let n_osc = (eta.abs() * 40.0 / a / PI).ceil() as usize;
    let pieces = n_osc.clamp(1, 400);
    let sig_lo = (v_hi - 8.0).exp();
    points.push(sig_lo.ln());
    for j in 1..=pieces {
        let sig = sig_lo + (40.0 / a - sig_lo) * j as f64 / pieces as f64;
        points.push(sig.ln());
    }
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: tol,
        max_intervals: 20_000,
    };
    let res = crate::quad::integrate_pieces(
        |v: f64| (s * v + k * v.exp()).exp(),
        &points,
        opts,
    )?;
    Ok(res.value)
}
