//! The horizon wave packet, plane-wave mode data and the eikonal approximation.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{rho_of, sigma_jet, FlowMap};
use crate::quad::{integrate, QuadOptions};
use crate::special::{gamma_real, GammaParams};

/// Packet `C0 = amplitude * rho^(-1/2) * C01(sigma(rho, x0))` with
/// `C01(sigma) = (sigma - sigma*)^(eps + i alpha) e^(-a (sigma - sigma*))` for `sigma > sigma*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketParams {
    pub alpha: f64,
    pub a: f64,
    pub eps: f64,
    pub sigma_star: f64,
    /// Overall constant factor; every normalized quantity is independent of it.
    pub amplitude: f64,
}

impl PacketParams {
    pub fn new(alpha: f64, a: f64, eps: f64, sigma_star: f64) -> Result<Self> {
        GammaParams::new(alpha, eps)?;
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Domain(format!("a must be positive, got {a}")));
        }
        if !(sigma_star > 0.0 && sigma_star.is_finite()) {
            return Err(Error::Domain(format!("sigma* must be positive, got {sigma_star}")));
        }
        Ok(Self {
            alpha,
            a,
            eps,
            sigma_star,
            amplitude: 1.0,
        })
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn gamma_params(&self) -> GammaParams {
        GammaParams {
            alpha: self.alpha,
            eps: self.eps,
        }
    }
}

/// Profile `C01(sigma)`, zero on and inside the horizon label.
pub fn eval_packet_profile(sigma: f64, p: &PacketParams) -> Complex64 {
    let s = sigma - p.sigma_star;
    if !(s > 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    p.amplitude * (Complex64::new(p.eps, p.alpha) * s.ln() - p.a * s).exp()
}

/// `d C01 / d sigma`.
pub fn eval_packet_profile_derivative(sigma: f64, p: &PacketParams) -> Complex64 {
    let s = sigma - p.sigma_star;
    if !(s > 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    eval_packet_profile(sigma, p) * (Complex64::new(p.eps, p.alpha) / s - p.a)
}

/// Value and first derivatives of a field at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub value: Complex64,
    pub d_rho: Complex64,
    pub d_x0: Complex64,
}

/// Packet value at `(rho, x0)`.
pub fn eval_packet(rho: f64, x0: f64, p: &PacketParams, flow: &FlowMap) -> Result<Complex64> {
    let jet = sigma_jet(rho, x0, &flow.config)?;
    Ok(eval_packet_profile(jet.sigma, p) / rho.sqrt())
}

/// Packet with its `rho` and `x0` derivatives. `sigma` obeys
/// `sigma_x0 = -(A/rho + 1) sigma_rho`.
pub fn eval_packet_jet(rho: f64, x0: f64, p: &PacketParams, flow: &FlowMap) -> Result<PointValue> {
    let jet = sigma_jet(rho, x0, &flow.config)?;
    let a_over_rho = flow.profile().eval(x0) / rho;
    Ok(packet_jet_from_offset(
        jet.sigma - p.sigma_star,
        rho,
        jet.dsigma_drho,
        a_over_rho,
        p,
    ))
}

/// Packet jet from the label offset `s = sigma - sigma*` given directly,
/// which avoids cancellation in `sigma - sigma*` close to the horizon.
pub fn packet_jet_from_offset(
    s: f64,
    rho: f64,
    dsigma_drho: f64,
    a_over_rho: f64,
    p: &PacketParams,
) -> PointValue {
    let zero = Complex64::new(0.0, 0.0);
    if !(s > 0.0) {
        return PointValue {
            value: zero,
            d_rho: zero,
            d_x0: zero,
        };
    }
    let c = p.amplitude * (Complex64::new(p.eps, p.alpha) * s.ln() - p.a * s).exp();
    let dc = c * (Complex64::new(p.eps, p.alpha) / s - p.a);
    let r = rho.sqrt();
    let sigma_t = -(a_over_rho + 1.0) * dsigma_drho;
    PointValue {
        value: c / r,
        d_rho: -0.5 * c / (r * rho) + dc * dsigma_drho / r,
        d_x0: dc * sigma_t / r,
    }
}

/// Sign family of a plane-wave mode. `Plus` carries `lambda-`, `Minus` carries `lambda+`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeFamily {
    Plus,
    Minus,
}

/// Radial wavenumber and family of a mode (angular number fixed to zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub eta: f64,
    pub family: ModeFamily,
}

/// `gamma = (eta^2 + 1)^(-1/4) / (sqrt 2 sqrt rho)`
pub fn mode_amplitude(eta: f64, rho: f64) -> f64 {
    1.0 / ((2.0 * rho).sqrt() * (eta * eta + 1.0).powf(0.25))
}

/// `lambda(+/-) = -A(0) eta / rho +/- sqrt(eta^2 + 1)`
pub fn mode_frequencies(eta: f64, a0_over_rho: f64) -> (f64, f64) {
    let w = (eta * eta + 1.0).sqrt();
    let d = -a0_over_rho * eta;
    (d + w, d - w)
}

/// Initial value and `x0`-derivative of a plane-wave mode at `x0 = 0`:
/// `gamma e^(i eta rho)` and `i lambda gamma e^(i eta rho)`.
pub fn mode_initial_data(mode: ModeSpec, rho: f64, a0_over_rho: f64) -> (Complex64, Complex64) {
    let g = mode_amplitude(mode.eta, rho);
    let (lp, lm) = mode_frequencies(mode.eta, a0_over_rho);
    let lambda = match mode.family {
        ModeFamily::Plus => lm,
        ModeFamily::Minus => lp,
    };
    let v = Complex64::from_polar(g, mode.eta * rho);
    (v, Complex64::i() * lambda * v)
}

/// The exact mode whose geometric-optics limit is the eikonal with `eta < 0`:
/// the `Plus` family at wavenumber `|eta|`, so that its data is `gamma e^(-i eta rho)`.
pub fn exact_mode_spec(eta: f64) -> Result<ModeSpec> {
    if !(eta < 0.0) {
        return Err(Error::Domain(format!("eta must be negative, got {eta}")));
    }
    Ok(ModeSpec {
        eta: -eta,
        family: ModeFamily::Plus,
    })
}

/// Eikonal `E = gamma(rho) e^(-i eta sigma(rho, x0))` with derivatives.
pub fn eval_eikonal(rho: f64, x0: f64, eta: f64, flow: &FlowMap) -> Result<PointValue> {
    if !(eta < 0.0) {
        return Err(Error::Domain(format!("eta must be negative, got {eta}")));
    }
    let jet = sigma_jet(rho, x0, &flow.config)?;
    let g = mode_amplitude(eta, rho);
    let e = Complex64::from_polar(g, -eta * jet.sigma);
    let a_over_rho = flow.profile().eval(x0) / rho;
    let phase_rho = Complex64::new(0.0, -eta * jet.dsigma_drho);
    Ok(PointValue {
        value: e,
        d_rho: e * (phase_rho - 0.5 / rho),
        d_x0: e * phase_rho * -(a_over_rho + 1.0),
    })
}

/// `<C0, C0> = 4 pi alpha Gamma(2 eps) / (2a)^(2 eps)` (times `amplitude^2`).
pub fn packet_norm_closed(p: &PacketParams) -> f64 {
    p.amplitude * p.amplitude * 4.0 * PI * p.alpha * gamma_real(2.0 * p.eps)
        / (2.0 * p.a).powf(2.0 * p.eps)
}

/// Klein-Gordon density `i [(u* v_t - u*_t v) + (A/rho)(u* v_rho - u*_rho v)] rho`,
/// to be integrated in `rho` and multiplied by `2 pi`.
pub fn kg_density(u: &PointValue, v: &PointValue, a_over_rho: f64, rho: f64) -> Complex64 {
    let uc = u.value.conj();
    let bracket = (uc * v.d_x0 - u.d_x0.conj() * v.value)
        + a_over_rho * (uc * v.d_rho - u.d_rho.conj() * v.value);
    Complex64::i() * bracket * rho
}

/// Full Klein-Gordon norm of the packet on the slice `x0`, integrated in
/// `s = sigma - sigma*` (with `s = e^w`) through the forward characteristic map.
pub fn packet_norm_numeric(p: &PacketParams, flow: &FlowMap, x0: f64, tol: f64) -> Result<f64> {
    let w_lo = -(2.0 * p.a).ln() - 20.0 / p.eps;
    let w_hi = (40.0 / p.a).ln();
    let a_t = flow.profile().eval(x0);
    let mut failure = None;
    let res = integrate(
        |w: f64| {
            let s = w.exp();
            let sigma = p.sigma_star + s;
            let (rho, drho_dsigma) = if x0 == 0.0 {
                (sigma, 1.0)
            } else {
                match rho_of(sigma, x0, &flow.config) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        return 0.0;
                    }
                }
            };
            let u = packet_jet_from_offset(s, rho, 1.0 / drho_dsigma, a_t / rho, p);
            kg_density(&u, &u, a_t / rho, rho).re * drho_dsigma * s
        },
        w_lo,
        w_hi,
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: tol,
            max_intervals: 4000,
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(2.0 * PI * res.value)
}

/// `packet_norm(numeric = false)` is the closed form; `numeric = true`
/// integrates the Klein-Gordon norm at `x0 = 0`.
pub fn packet_norm(p: &PacketParams, flow: &FlowMap, numeric: bool) -> Result<f64> {
    if numeric {
        packet_norm_numeric(p, flow, 0.0, 1e-11)
    } else {
        Ok(packet_norm_closed(p))
    }
}

/// Samples `C01` on `n` points of `[sigma*, sigma* + span]`.
pub fn sample_profile(p: &PacketParams, span: f64, n: usize) -> Vec<(f64, Complex64)> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let sigma = p.sigma_star + span * i as f64 / (n - 1) as f64;
            (sigma, eval_packet_profile(sigma, p))
        })
        .collect()
}
