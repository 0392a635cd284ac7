//! Klein-Gordon products, projection coefficients and created-particle numbers.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{local_exponents, power_law_fit, richardson};
use crate::flow::{rho_of, Drift, FlowMap};
use crate::packet::{kg_density, packet_norm_closed, PacketParams, PointValue};
use crate::quad::{compensated_sum, integrate, simpson_uniform, QuadOptions};
use crate::special::{gamma0_norm_sqr, gamma_real, packet_fourier, GammaParams};

/// A field and its first derivatives sampled on a uniform radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub rho: Vec<f64>,
    pub value: Vec<Complex64>,
    pub d_x0: Vec<Complex64>,
    pub d_rho: Vec<Complex64>,
}

impl FieldSample {
    pub fn from_fn(rho: Vec<f64>, mut f: impl FnMut(f64) -> PointValue) -> Self {
        let pts: Vec<PointValue> = rho.iter().map(|r| f(*r)).collect();
        Self {
            value: pts.iter().map(|p| p.value).collect(),
            d_x0: pts.iter().map(|p| p.d_x0).collect(),
            d_rho: pts.iter().map(|p| p.d_rho).collect(),
            rho,
        }
    }

    fn point(&self, i: usize) -> PointValue {
        PointValue {
            value: self.value[i],
            d_rho: self.d_rho[i],
            d_x0: self.d_x0[i],
        }
    }

    fn check(&self) -> Result<f64> {
        let n = self.rho.len();
        if n < 3 || self.value.len() != n || self.d_x0.len() != n || self.d_rho.len() != n {
            return Err(Error::GridMismatch(format!(
                "field arrays have inconsistent lengths ({n} nodes)"
            )));
        }
        let h = (self.rho[n - 1] - self.rho[0]) / (n - 1) as f64;
        let uniform = self
            .rho
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
        if !uniform || h <= 0.0 {
            return Err(Error::GridMismatch("radial grid is not uniform and increasing".into()));
        }
        Ok(h)
    }
}

/// `<u, v> = 2 pi i int [(u* v_t - u*_t v) + (A/rho)(u* v_rho - u*_rho v)] rho d rho`
/// by composite Simpson on the common grid.
pub fn kg_inner(u: &FieldSample, v: &FieldSample, x0: f64, drift: &dyn Drift) -> Result<Complex64> {
    let h = u.check()?;
    v.check()?;
    if u.rho.len() != v.rho.len()
        || u.rho.iter().zip(&v.rho).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        return Err(Error::GridMismatch("fields live on different grids".into()));
    }
    let a = drift.strength(x0);
    let dens: Vec<Complex64> = (0..u.rho.len())
        .map(|i| {
            let r = u.rho[i];
            kg_density(&u.point(i), &v.point(i), a / r, r)
        })
        .collect();
    Ok(2.0 * PI * simpson_uniform(&dens, h))
}

/// `<f, C0>` on the slice `x0`, after moving the derivative off the packet:
/// `2 pi i int C01(sigma) [ rho^(-1/2)(1 - A/rho) f*/2 + rho^(1/2)(f*_rho - (Df)*) ] d rho`,
/// with `Df = f_x0 + (A/rho) f_rho`. Integrated in `s = sigma - sigma*`.
pub fn project_onto_packet<F>(mut field: F, p: &PacketParams, flow: &FlowMap, x0: f64, tol: f64) -> Result<Complex64>
where
    F: FnMut(f64) -> Result<PointValue>,
{
    let a = flow.profile().eval(x0);
    let w_lo = -p.a.ln() - 40.0 / (1.0 + p.eps);
    let w_hi = (40.0 / p.a).ln();
    let mut failure = None;
    let res = integrate(
        |w: f64| {
            let s = w.exp();
            let sigma = p.sigma_star + s;
            let (rho, jac) = if x0 == 0.0 {
                (sigma, 1.0)
            } else {
                match rho_of(sigma, x0, &flow.config) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        return Complex64::new(0.0, 0.0);
                    }
                }
            };
            let f = match field(rho) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    return Complex64::new(0.0, 0.0);
                }
            };
            let k = p.amplitude * (Complex64::new(p.eps, p.alpha) * w - p.a * s).exp();
            let g = f.d_x0 + a / rho * f.d_rho;
            let sr = rho.sqrt();
            let bracket = 0.5 / sr * (1.0 - a / rho) * f.value.conj() + sr * (f.d_rho.conj() - g.conj());
            k * bracket * jac * s
        },
        w_lo,
        w_hi,
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: tol,
            max_intervals: 8000,
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(2.0 * PI * Complex64::i() * res.value)
}

/// Eikonal projection coefficients at `eta = -eta_abs`:
/// `c1 = e^(i sigma* eta) (i / (sqrt 2 (eta^2+1)^(1/4))) i eta F(-eta)` and the
/// same expression for `c2`.
pub fn eikonal_projections(eta_abs: f64, p: &PacketParams) -> Result<(Complex64, Complex64)> {
    if !(eta_abs >= 0.0) {
        return Err(Error::Domain(format!("|eta| must be non-negative, got {eta_abs}")));
    }
    let eta = -eta_abs;
    let f = p.amplitude * packet_fourier(eta, &p.gamma_params(), p.a)?;
    let pre = Complex64::from_polar(1.0, p.sigma_star * eta) * Complex64::i()
        / (2f64.sqrt() * (eta * eta + 1.0).powf(0.25));
    let c1 = pre * Complex64::i() * eta * f;
    let c2 = Complex64::i() * Complex64::from_polar(1.0, eta * p.sigma_star)
        / (2f64.sqrt() * (eta * eta + 1.0).powf(0.25))
        * Complex64::i()
        * eta
        * f;
    Ok((c1, c2))
}

/// Created-particle density per unit `|eta|`:
/// `2 eta^2 |Gamma0|^2 e^(-2 alpha asin(a/|eta+ia|)) / (sqrt(eta^2+1) |eta+ia|^(2 eps+2))`.
pub fn creation_density(eta_abs: f64, p: &PacketParams) -> Result<f64> {
    if !(eta_abs >= 0.0) {
        return Err(Error::Domain(format!("|eta| must be non-negative, got {eta_abs}")));
    }
    let gp = p.gamma_params();
    let r2 = eta_abs * eta_abs + p.a * p.a;
    let asin = (p.a / r2.sqrt()).asin();
    Ok(p.amplitude * p.amplitude * 2.0 * eta_abs * eta_abs * gamma0_norm_sqr(&gp)
        * (-2.0 * p.alpha * asin).exp()
        / ((eta_abs * eta_abs + 1.0).sqrt() * r2.powf(p.eps + 1.0)))
}

/// `-4 Re(c1 conj c2)` from the eikonal projection coefficients.
pub fn projection_density(eta_abs: f64, p: &PacketParams) -> Result<f64> {
    let (c1, c2) = eikonal_projections(eta_abs, p)?;
    Ok(-4.0 * (c1 * c2.conj()).re)
}

/// Total number with its quadrature error and the analytic tail added beyond the cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalNumber {
    pub value: f64,
    pub quad_error: f64,
    /// Tail `int_H^inf` replaced by its leading asymptotic `|Gamma0|^2 H^(-2 eps) / eps`.
    pub tail: f64,
    pub eta_max: f64,
}

/// `int_0^inf creation_density d|eta|`, by adaptive quadrature in `ln|eta|` up to
/// `eta_max = 1e30 a` plus the analytic tail.
pub fn total_number(p: &PacketParams, tol: f64) -> Result<TotalNumber> {
    let la = p.a.ln();
    let eta_max = p.a * 1e30;
    let res = integrate(
        |w: f64| {
            let eta = w.exp();
            creation_density(eta, p).unwrap_or(f64::NAN) * eta
        },
        la - 40.0,
        eta_max.ln(),
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: tol,
            max_intervals: 4000,
        },
    )?;
    let tail = p.amplitude * p.amplitude * gamma0_norm_sqr(&p.gamma_params())
        * eta_max.powf(-2.0 * p.eps)
        / p.eps;
    Ok(TotalNumber {
        value: res.value + tail,
        quad_error: res.error,
        tail,
        eta_max,
    })
}

/// `int_0^{pi/2} g(phi) sin^(2 eps - 1)(phi) d phi` through `phi = x^(1/(2 eps))`,
/// which makes the endpoint singularity disappear.
fn singular_angle_integral(eps: f64, tol: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
    let q = 1.0 / (2.0 * eps);
    let res = integrate(
        |x: f64| {
            if x <= 0.0 {
                return g(0.0) * q;
            }
            let phi = x.powf(q);
            let ratio = if phi < 1e-8 { 1.0 - phi * phi / 6.0 } else { phi.sin() / phi };
            q * g(phi) * ratio.powf(2.0 * eps - 1.0)
        },
        0.0,
        FRAC_PI_2.powf(2.0 * eps),
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: tol,
            max_intervals: 4000,
        },
    )?;
    Ok(res.value)
}

/// Total number through the angle `phi = asin(a / |eta + i a|)`:
/// `2 |Gamma0|^2 a^(1-2eps) int cos^2 phi sin^(2eps-1) phi e^(-2 alpha phi) / sqrt(a^2 cos^2 phi + sin^2 phi)`.
pub fn total_number_angular(p: &PacketParams, tol: f64) -> Result<f64> {
    let (a, alpha) = (p.a, p.alpha);
    let i = singular_angle_integral(p.eps, tol, |phi| {
        let c = phi.cos();
        let s = phi.sin();
        c * c * (-2.0 * alpha * phi).exp() / (a * a * c * c + s * s).sqrt()
    })?;
    Ok(p.amplitude * p.amplitude * 2.0 * gamma0_norm_sqr(&p.gamma_params()) * a.powf(1.0 - 2.0 * p.eps) * i)
}

/// `int_0^inf eta (eta^2+1)^(-eps-1) e^(-2 beta asin(1/sqrt(eta^2+1))) d eta`
pub fn limit_integral(beta: f64, eps: f64, tol: f64) -> Result<f64> {
    singular_angle_integral(eps, tol, |phi| phi.cos() * (-2.0 * beta * phi).exp())
}

/// `a -> inf` limit of the normalized number:
/// `2^(2 eps) |Gamma0|^2 / (2 pi alpha Gamma(2 eps)) * limit_integral(alpha, eps)`.
pub fn normalized_number_limit(alpha: f64, eps: f64) -> Result<f64> {
    let gp = GammaParams::new(alpha, eps)?;
    Ok(2f64.powf(2.0 * eps) * gamma0_norm_sqr(&gp) / (2.0 * PI * alpha * gamma_real(2.0 * eps))
        * limit_integral(alpha, eps, 1e-13)?)
}

/// Alternative statement of the same limit with prefactor `2^eps` and
/// exponent `e^(-2 asin(...))`; kept for side-by-side comparison.
pub fn normalized_number_limit_variant(alpha: f64, eps: f64) -> Result<f64> {
    let gp = GammaParams::new(alpha, eps)?;
    Ok(2f64.powf(eps) * gamma0_norm_sqr(&gp) / (2.0 * PI * alpha * gamma_real(2.0 * eps))
        * limit_integral(1.0, eps, 1e-13)?)
}

/// Per-`|eta|` spectrum for one packet.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    pub eta_grid: Vec<f64>,
    pub density: Vec<f64>,
    pub c1: Vec<Complex64>,
    pub c2: Vec<Complex64>,
    /// Trapezoidal sum of `density` over the grid.
    pub grid_total: f64,
    /// Adaptive total over `(0, inf)`.
    pub total: f64,
    pub total_normalized: f64,
}

/// Evaluates the spectrum on `eta_grid` (non-negative, increasing); the
/// per-point work runs in parallel and the reduction order is fixed.
pub fn spectrum_table(p: &PacketParams, eta_grid: &[f64], tol: f64) -> Result<SpectrumTable> {
    if eta_grid.windows(2).any(|w| !(w[1] > w[0])) || eta_grid.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::Domain("eta grid must be non-negative and strictly increasing".into()));
    }
    let rows: Vec<(f64, Complex64, Complex64)> = eta_grid
        .par_iter()
        .map(|&e| {
            let d = creation_density(e, p)?;
            let (c1, c2) = eikonal_projections(e, p)?;
            Ok((d, c1, c2))
        })
        .collect::<Result<_>>()?;
    let density: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let pieces: Vec<f64> = eta_grid
        .windows(2)
        .zip(density.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .collect();
    let total = total_number(p, tol)?.value;
    Ok(SpectrumTable {
        eta_grid: eta_grid.to_vec(),
        c1: rows.iter().map(|r| r.1).collect(),
        c2: rows.iter().map(|r| r.2).collect(),
        density,
        grid_total: compensated_sum(&pieces),
        total,
        total_normalized: total / packet_norm_closed(p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub a: f64,
    pub total: f64,
    pub total_normalized: f64,
    pub limit: f64,
    pub residual: f64,
}

/// Normalized numbers along a sweep in `a` compared with the limit.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSweep {
    pub alpha: f64,
    pub eps: f64,
    pub limit: f64,
    pub limit_variant: f64,
    pub rows: Vec<SweepRow>,
    /// Fitted `p` in `|residual| ~ K a^(-p)`; `None` for fewer than two points.
    pub exponent: Option<f64>,
    pub local_exponents: Vec<f64>,
    /// `max |residual| * a` over the sweep.
    pub k_over_a: f64,
    /// First-order Richardson extrapolation from the last two sweep points.
    pub richardson: Option<f64>,
}

pub fn limit_sweep(alpha: f64, eps: f64, a_values: &[f64], sigma_star: f64, tol: f64) -> Result<LimitSweep> {
    if a_values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("a sweep must be strictly increasing".into()));
    }
    let limit = normalized_number_limit(alpha, eps)?;
    let limit_variant = normalized_number_limit_variant(alpha, eps)?;
    let rows: Vec<SweepRow> = a_values
        .par_iter()
        .map(|&a| {
            let p = PacketParams::new(alpha, a, eps, sigma_star)?;
            let total = total_number(&p, tol)?.value;
            let total_normalized = total / packet_norm_closed(&p);
            Ok(SweepRow {
                a,
                total,
                total_normalized,
                limit,
                residual: total_normalized - limit,
            })
        })
        .collect::<Result<_>>()?;
    let a: Vec<f64> = rows.iter().map(|r| r.a).collect();
    let res: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let exponent = if rows.len() >= 2 {
        power_law_fit(&a, &res).ok().map(|f| -f.slope)
    } else {
        None
    };
    let richardson = match rows.as_slice() {
        [.., x, y] => Some(richardson(x.total_normalized, y.total_normalized, y.a / x.a, 1.0)),
        _ => None,
    };
    Ok(LimitSweep {
        alpha,
        eps,
        limit,
        limit_variant,
        k_over_a: rows.iter().map(|r| r.residual.abs() * r.a).fold(0.0, f64::max),
        local_exponents: local_exponents(&a, &res),
        exponent,
        richardson,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowConfig, VelocityProfile};
    use crate::packet::{eval_eikonal, mode_amplitude, mode_initial_data, ModeFamily, ModeSpec};
    use crate::quad::gauss_legendre;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_map() -> FlowMap {
        FlowMap::with_sigma_star(FlowConfig::new(VelocityProfile::constant(-1.0).unwrap()), 1.0)
    }

    fn params(a: f64) -> PacketParams {
        PacketParams::new(1.0, a, 0.25, 1.0).unwrap()
    }

    /// Gaussian superposition of plane-wave data centred at `rho_c`.
    fn smeared(family: ModeFamily, k0: f64, width: f64, rho: &[f64], a0: f64, rho_c: f64) -> FieldSample {
        let (x, w) = gauss_legendre(240);
        let half = 8.0 * width;
        FieldSample::from_fn(rho.to_vec(), |r| {
            let mut v = Complex64::new(0.0, 0.0);
            let mut vt = Complex64::new(0.0, 0.0);
            let mut vr = Complex64::new(0.0, 0.0);
            for (xi, wi) in x.iter().zip(&w) {
                let k = k0 + half * xi;
                let weight = wi * half * (-(k - k0).powi(2) / (2.0 * width * width)).exp();
                let shift = Complex64::from_polar(weight, -k * rho_c);
                let (f, ft) = mode_initial_data(ModeSpec { eta: k, family }, r, a0 / r);
                v += shift * f;
                vt += shift * ft;
                vr += shift * f * (Complex64::new(0.0, k) - 0.5 / r);
            }
            PointValue { value: v, d_rho: vr, d_x0: vt }
        })
    }

    #[test]
    fn smeared_mode_products() {
        let n = 6001;
        let rho: Vec<f64> = (0..n).map(|i| 0.5 + 59.5 * i as f64 / (n - 1) as f64).collect();
        let drift = VelocityProfile::constant(-1.0).unwrap();
        let s = 0.5;
        let up = smeared(ModeFamily::Plus, 3.0, s, &rho, -1.0, 30.0);
        let um = smeared(ModeFamily::Minus, -3.0, s, &rho, -1.0, 30.0);
        let vp = smeared(ModeFamily::Plus, -2.0, s, &rho, -1.0, 30.0);
        let expect = 4.0 * PI * PI * s * PI.sqrt();
        let nn = kg_inner(&up, &up, 0.0, &drift).unwrap();
        assert_relative_eq!(nn.re, expect, max_relative = 1e-8);
        assert!(nn.im.abs() < 1e-10 * expect);
        let mm = kg_inner(&um, &um, 0.0, &drift).unwrap();
        assert_relative_eq!(mm.re, -expect, max_relative = 1e-8);
        assert!(kg_inner(&up, &um, 0.0, &drift).unwrap().norm() < 1e-8 * expect);
        assert!(kg_inner(&up, &vp, 0.0, &drift).unwrap().norm() < 1e-8 * expect);
        let uv = kg_inner(&up, &vp, 0.0, &drift).unwrap();
        let vu = kg_inner(&vp, &up, 0.0, &drift).unwrap();
        assert!((uv - vu.conj()).norm() < 1e-12 * expect);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let drift = VelocityProfile::constant(-1.0).unwrap();
        let a: Vec<f64> = (0..11).map(|i| 1.0 + 0.1 * i as f64).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 + 0.2 * i as f64).collect();
        let one = |_: f64| PointValue {
            value: Complex64::new(1.0, 0.0),
            d_rho: Complex64::new(0.0, 0.0),
            d_x0: Complex64::new(0.0, 1.0),
        };
        let u = FieldSample::from_fn(a, one);
        let v = FieldSample::from_fn(b, one);
        assert!(matches!(kg_inner(&u, &v, 0.0, &drift), Err(Error::GridMismatch(_))));
        let mut bad = u.clone();
        bad.value.pop();
        assert!(matches!(kg_inner(&bad, &u, 0.0, &drift), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn projection_of_eikonal_matches_closed_form() {
        // the coefficient integrals omit the angular factor 2 pi carried by the full product
        let map = unit_map();
        for (a, eta) in [(4.0, -2.0), (8.0, -9.0), (2.0, -0.3)] {
            let p = PacketParams::new(1.0, a, 0.25, 1.0).unwrap();
            let pr = project_onto_packet(|r| eval_eikonal(r, 0.0, eta, &map), &p, &map, 0.0, 1e-11).unwrap();
            let (c1, _) = eikonal_projections(-eta, &p).unwrap();
            let expect = 4.0 * PI * c1;
            assert!((pr - expect).norm() < 1e-8 * expect.norm(), "a={a} eta={eta}: {pr} vs {expect}");
        }
    }

    #[test]
    fn projection_of_mode_deviation() {
        // d = f0 - E has zero value at x0 = 0 and a known time derivative;
        // its projection relative to the eikonal one is (sqrt(eta^2+1) - |eta|) / (2|eta|).
        let map = unit_map();
        let p = params(6.0);
        for eta in [-0.5f64, -2.0, -7.0] {
            let e = project_onto_packet(|r| eval_eikonal(r, 0.0, eta, &map), &p, &map, 0.0, 1e-11).unwrap();
            let d = project_onto_packet(
                |r| {
                    let g = mode_amplitude(eta, r);
                    let w = (eta * eta + 1.0).sqrt();
                    let z = Complex64::new(0.0, 0.0);
                    Ok(PointValue {
                        value: z,
                        d_rho: z,
                        d_x0: -Complex64::i() * g * (w - eta.abs()) * Complex64::from_polar(1.0, -eta * r),
                    })
                },
                &p,
                &map,
                0.0,
                1e-11,
            )
            .unwrap();
            let ratio = d / e;
            let expect = ((eta * eta + 1.0).sqrt() - eta.abs()) / (2.0 * eta.abs());
            assert!((ratio - expect).norm() < 1e-8, "eta={eta}: {ratio}");
        }
    }

    #[test]
    fn projections_vanish_linearly_at_zero() {
        let p = params(3.0);
        let (c1, _) = eikonal_projections(1e-6, &p).unwrap();
        let (d1, _) = eikonal_projections(2e-6, &p).unwrap();
        assert_relative_eq!(d1.norm() / c1.norm(), 2.0, max_relative = 1e-5);
        assert_eq!(creation_density(0.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn density_example() {
        let p = PacketParams::new(1.0, 1.0, 0.5, 1.0).unwrap();
        let g2 = gamma0_norm_sqr(&p.gamma_params());
        // |eta + i a|^(2 eps + 2) = 2^(3/2) here
        let expect = 2.0 * g2 * (-FRAC_PI_2).exp() / (2f64.sqrt() * 2f64.powf(1.5));
        assert_relative_eq!(creation_density(1.0, &p).unwrap(), expect, max_relative = 1e-14);
    }

    #[test]
    fn closed_form_density_is_the_squared_eikonal_projection() {
        // |<E, C0>|^2 = |2 c1|^2 reproduces the closed form; the projection
        // product has the opposite sign because c1 = c2.
        let p = params(5.0);
        for eta in [0.1, 1.0, 7.5, 60.0] {
            let (c1, c2) = eikonal_projections(eta, &p).unwrap();
            let closed = creation_density(eta, &p).unwrap();
            assert_relative_eq!(4.0 * c1.norm_sqr(), closed, max_relative = 1e-12);
            assert_relative_eq!(c1.norm(), c2.norm(), max_relative = 1e-14);
            assert_relative_eq!(projection_density(eta, &p).unwrap(), -closed, max_relative = 1e-12);
        }
    }

    #[test]
    fn scaling_collapse() {
        let (alpha, eps) = (1.0, 0.25);
        let g2 = gamma0_norm_sqr(&GammaParams::new(alpha, eps).unwrap());
        for u in [0.3, 1.0, 2.5] {
            let lim = 2.0 * u * g2 * (-2.0 * alpha * (1.0 / (u * u + 1.0f64).sqrt()).asin()).exp()
                / (u * u + 1.0f64).powf(eps + 1.0);
            let mut prev = f64::INFINITY;
            for a in [16.0, 64.0, 256.0] {
                let p = PacketParams::new(alpha, a, eps, 1.0).unwrap();
                let v = a.powf(2.0 * eps) * creation_density(u * a, &p).unwrap() * a;
                let err = (v / lim - 1.0).abs();
                assert!(err < prev);
                prev = err;
            }
            assert!(prev < 1e-4);
        }
    }

    #[test]
    fn total_number_two_routes() {
        for a in [1.0, 4.0, 64.0] {
            for eps in [0.1, 0.25, 0.5] {
                let p = PacketParams::new(1.0, a, eps, 1.0).unwrap();
                let t = total_number(&p, 1e-12).unwrap();
                let q = total_number_angular(&p, 1e-12).unwrap();
                assert_relative_eq!(t.value, q, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn total_decreases_with_a() {
        let t4 = total_number(&params(4.0), 1e-10).unwrap().value;
        let t64 = total_number(&params(64.0), 1e-10).unwrap().value;
        assert!(t64 < t4);
    }

    #[test]
    fn limit_values() {
        assert_relative_eq!(normalized_number_limit(1.0, 0.25).unwrap(), 1.009_412_534_931_207_8, max_relative = 1e-10);
        assert_relative_eq!(normalized_number_limit_variant(1.0, 0.25).unwrap(), 0.848_811_382_135_817_5, max_relative = 1e-10);
    }

    #[test]
    fn limit_integral_against_direct_quadrature() {
        for (beta, eps) in [(1.0, 0.25), (2.0, 0.5), (0.5, 0.1)] {
            let direct = integrate(
                |w: f64| {
                    let eta = w.exp();
                    eta * eta * (eta * eta + 1.0f64).powf(-eps - 1.0)
                        * (-2.0 * beta * (1.0 / (eta * eta + 1.0f64).sqrt()).asin()).exp()
                },
                -40.0,
                30.0 / eps,
                QuadOptions::tight(1e-13),
            )
            .unwrap()
            .value;
            assert_relative_eq!(limit_integral(beta, eps, 1e-13).unwrap(), direct, max_relative = 1e-9);
        }
    }

    #[test]
    fn limit_prefactor_identity() {
        // limit = lim a^(2eps) total / (a^(2 eps) norm) with the norm prefactor 4 pi alpha Gamma(2eps) / 2^(2eps)
        let (alpha, eps) = (1.0, 0.25);
        let gp = GammaParams::new(alpha, eps).unwrap();
        let total_scaled = gamma0_norm_sqr(&gp) * 2.0 * limit_integral(alpha, eps, 1e-13).unwrap();
        let norm_scaled = 4.0 * PI * alpha * gamma_real(2.0 * eps) / 2f64.powf(2.0 * eps);
        assert_relative_eq!(total_scaled / norm_scaled, normalized_number_limit(alpha, eps).unwrap(), max_relative = 1e-13);
    }

    #[test]
    fn large_alpha_behaviour() {
        // The integral is dominated by small angles, where the exponential weight
        // is close to one, so it decays algebraically: I ~ Gamma(2 eps) / (2 alpha)^(2 eps).
        let eps = 0.5;
        let mut prev = f64::INFINITY;
        for alpha in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let i = limit_integral(alpha, eps, 1e-12).unwrap();
            assert!(i < prev);
            prev = i;
            let lead = gamma_real(2.0 * eps) / (2.0 * alpha).powf(2.0 * eps);
            if alpha >= 8.0 {
                assert_relative_eq!(i, lead, max_relative = 0.01);
            }
        }
        // and the normalized limit tends to one (checked against mpmath at alpha = 8)
        assert_relative_eq!(normalized_number_limit(8.0, 0.5).unwrap(), 1.0, max_relative = 1e-11);
        assert_relative_eq!(normalized_number_limit(1.0, 0.5).unwrap(), 1.019_702_722_693_888_6, max_relative = 1e-10);
    }

    #[test]
    fn sweep_trend() {
        let s = limit_sweep(1.0, 0.25, &[4.0, 8.0, 16.0, 32.0, 64.0], 1.0, 1e-11).unwrap();
        assert!(s.rows.last().unwrap().residual.abs() / s.limit < 0.02);
        assert!(s.rows.windows(2).all(|w| w[1].residual.abs() < w[0].residual.abs()));
        assert!(s.rows.windows(2).all(|w| w[1].total < w[0].total));
        assert!(s.exponent.unwrap() > 0.5);
    }

    #[test]
    fn spectrum_table_is_consistent() {
        let p = params(4.0);
        let grid: Vec<f64> = (0..4001).map(|i| i as f64 * 0.05).collect();
        let t = spectrum_table(&p, &grid, 1e-11).unwrap();
        assert_eq!(t.density[0], 0.0);
        assert!(t.density.iter().all(|d| *d >= 0.0));
        // the grid covers most, but not the slowly decaying tail, of the total
        assert!(t.grid_total < t.total && t.grid_total > 0.5 * t.total);
        assert!(spectrum_table(&p, &[1.0, 0.5], 1e-10).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn normalization_is_scale_free(c in 0.01f64..100.0, a in 1.0f64..50.0) {
            let p = params(a);
            let q = p.with_amplitude(c);
            let n1 = total_number(&p, 1e-11).unwrap().value / packet_norm_closed(&p);
            let n2 = total_number(&q, 1e-11).unwrap().value / packet_norm_closed(&q);
            prop_assert!((n1 - n2).abs() <= 1e-12 * n1);
        }

        #[test]
        fn density_positive(eta in 0.0f64..500.0, a in 0.5f64..100.0, alpha in 0.1f64..4.0) {
            let p = PacketParams::new(alpha, a, 0.25, 1.0).unwrap();
            prop_assert!(creation_density(eta, &p).unwrap() >= 0.0);
        }
    }
}
