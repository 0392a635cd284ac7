//! Background flow, outgoing characteristics and the black-hole separatrix.
//!
//! The radial velocity of the fluid is `A(x0)/rho` with `A < 0`. Outgoing
//! sound rays obey `drho/dx0 = A(x0)/rho + 1`; the characteristic label
//! `sigma(rho, x0)` is the value at `x0 = 0` of the ray through `(rho, x0)`.
//! The separatrix between rays escaping to infinity and rays falling into
//! `rho = 0` is the acoustic horizon `rho*(x0)`, with `rho*(0) = sigma*`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{dopri5, Control, OdeFailure, OdeOptions};

/// Shape of `A(x0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileForm {
    Constant,
    SmoothStep,
}

impl std::str::FromStr for ProfileForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "constant" => Ok(Self::Constant),
            "smooth-step" | "smooth_step" | "tanh" => Ok(Self::SmoothStep),
            other => Err(Error::Domain(format!("unknown profile form `{other}`"))),
        }
    }
}

impl std::fmt::Display for ProfileForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Constant => "constant",
            Self::SmoothStep => "smooth-step",
        })
    }
}

/// Time-dependent flow strength
/// `A(x0) = (a+ + a-)/2 + (a+ - a-)/2 * tanh(x0 / tau)`, or a constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub a_minus: f64,
    pub a_plus: f64,
    pub tau: f64,
    pub form: ProfileForm,
}

impl VelocityProfile {
    pub fn new(a_minus: f64, a_plus: f64, tau: f64, form: ProfileForm) -> Result<Self> {
        if !(a_minus.is_finite() && a_plus.is_finite() && tau.is_finite()) {
            return Err(Error::Domain("profile parameters must be finite".into()));
        }
        if a_minus >= 0.0 || a_plus >= 0.0 {
            return Err(Error::Domain(format!(
                "flow strength must be negative, got a_minus = {a_minus}, a_plus = {a_plus}"
            )));
        }
        if tau <= 0.0 {
            return Err(Error::Domain(format!("tau must be positive, got {tau}")));
        }
        if form == ProfileForm::Constant && a_minus != a_plus {
            return Err(Error::Domain(
                "constant profile requires a_minus == a_plus".into(),
            ));
        }
        Ok(Self {
            a_minus,
            a_plus,
            tau,
            form,
        })
    }

    pub fn constant(a: f64) -> Result<Self> {
        Self::new(a, a, 1.0, ProfileForm::Constant)
    }

    pub fn smooth_step(a_minus: f64, a_plus: f64, tau: f64) -> Result<Self> {
        Self::new(a_minus, a_plus, tau, ProfileForm::SmoothStep)
    }

    #[inline]
    pub fn eval(&self, x0: f64) -> f64 {
        match self.form {
            ProfileForm::Constant => self.a_minus,
            ProfileForm::SmoothStep => {
                0.5 * (self.a_plus + self.a_minus)
                    + 0.5 * (self.a_plus - self.a_minus) * (x0 / self.tau).tanh()
            }
        }
    }

    #[inline]
    pub fn derivative(&self, x0: f64) -> f64 {
        match self.form {
            ProfileForm::Constant => 0.0,
            ProfileForm::SmoothStep => {
                let c = (x0 / self.tau).cosh();
                0.5 * (self.a_plus - self.a_minus) / (self.tau * c * c)
            }
        }
    }

    /// `|A(+inf)|`
    pub fn future_speed(&self) -> f64 {
        self.a_plus.abs()
    }

    /// `|A(-inf)|`
    pub fn past_speed(&self) -> f64 {
        self.a_minus.abs()
    }

    /// Largest `|A|` over all times.
    pub fn max_speed(&self) -> f64 {
        self.a_minus.abs().max(self.a_plus.abs())
    }

    /// Smallest `|A|` over all times.
    pub fn min_speed(&self) -> f64 {
        self.a_minus.abs().min(self.a_plus.abs())
    }
}

/// Anything that supplies a drift strength `A(x0)` to the wave solver.
pub trait Drift: Sync {
    fn strength(&self, x0: f64) -> f64;
}

impl Drift for VelocityProfile {
    fn strength(&self, x0: f64) -> f64 {
        self.eval(x0)
    }
}

/// Right-hand side of the outgoing characteristic equation.
pub fn characteristic_rhs(rho: f64, x0: f64, profile: &VelocityProfile) -> Result<f64> {
    if rho <= 0.0 || !rho.is_finite() {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    Ok(profile.eval(x0) / rho + 1.0)
}

/// Profile plus the numerical settings used for every characteristic solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub profile: VelocityProfile,
    pub ode_tol: f64,
    pub rho_min: f64,
}

impl FlowConfig {
    pub fn new(profile: VelocityProfile) -> Self {
        Self {
            profile,
            ode_tol: 1e-12,
            rho_min: 1e-3,
        }
    }

    pub fn with_tolerance(mut self, ode_tol: f64) -> Self {
        self.ode_tol = ode_tol;
        self
    }

    pub fn with_rho_min(mut self, rho_min: f64) -> Self {
        self.rho_min = rho_min;
        self
    }

    fn opts(&self) -> OdeOptions {
        OdeOptions::with_tol(self.ode_tol)
    }

    /// Classification window: `20 * tau`.
    pub fn classification_window(&self) -> f64 {
        20.0 * self.profile.tau
    }
}

fn step_failure(f: OdeFailure) -> Error {
    match f {
        OdeFailure::StepUnderflow { t } => Error::StepFailure {
            x0: t,
            reason: "step size underflow".into(),
        },
        OdeFailure::TooManySteps { t } => Error::StepFailure {
            x0: t,
            reason: "step budget exhausted".into(),
        },
    }
}

/// A sampled outgoing characteristic `rho(x0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicPath {
    pub x0: Vec<f64>,
    pub rho: Vec<f64>,
    /// Set when the ray fell below `rho_min` before reaching the end.
    pub captured: bool,
}

impl CharacteristicPath {
    pub fn end(&self) -> (f64, f64) {
        (*self.x0.last().unwrap(), *self.rho.last().unwrap())
    }
}

/// Integrates `drho/dx0 = A/rho + 1` from `(x0_from, sigma0)` to `x0_to`,
/// recording every accepted step.
pub fn integrate_characteristic(
    sigma0: f64,
    x0_from: f64,
    x0_to: f64,
    flow: &FlowConfig,
) -> Result<CharacteristicPath> {
    if sigma0.is_nan() || sigma0 <= flow.rho_min {
        return Err(Error::Domain(format!(
            "start value {sigma0} must exceed rho_min = {}",
            flow.rho_min
        )));
    }
    let profile = flow.profile;
    let rho_min = flow.rho_min;
    let mut x0 = vec![x0_from];
    let mut rho = vec![sigma0];
    let mut captured = false;
    dopri5(
        |t, y: &[f64; 1]| (y[0] > 0.0).then(|| [profile.eval(t) / y[0] + 1.0]),
        x0_from,
        [sigma0],
        x0_to,
        flow.opts(),
        |t, y| {
            x0.push(t);
            rho.push(y[0]);
            if y[0] < rho_min {
                captured = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )
    .map_err(step_failure)?;
    Ok(CharacteristicPath { x0, rho, captured })
}

/// Fate of a ray launched at `x0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Escaping,
    Captured,
}

impl std::fmt::Display for Fate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fate::Escaping => "escaping",
            Fate::Captured => "captured",
        })
    }
}

/// Decides whether the ray with `rho(0) = sigma0` escapes or falls in.
///
/// Integration stops as soon as the outcome is certain: above both
/// `2 |A(+inf)|` and `max |A|` the ray can only grow, below `min |A|` it can
/// only shrink. Otherwise the ray is followed to `x0 = 20 tau` and judged by
/// the sign of its velocity there.
pub fn classify(sigma0: f64, flow: &FlowConfig) -> Result<Fate> {
    let profile = flow.profile;
    let escape_above = (2.0 * profile.future_speed()).max(profile.max_speed() * (1.0 + 1e-9));
    let capture_below = flow.rho_min.max(profile.min_speed() * (1.0 - 1e-9));
    if sigma0 >= escape_above {
        return Ok(Fate::Escaping);
    }
    if sigma0 <= capture_below {
        return Ok(Fate::Captured);
    }
    let window = flow.classification_window();
    let mut fate = None;
    let out = dopri5(
        |t, y: &[f64; 1]| (y[0] > 0.0).then(|| [profile.eval(t) / y[0] + 1.0]),
        0.0,
        [sigma0],
        window,
        flow.opts(),
        |_, y| {
            if y[0] > escape_above {
                fate = Some(Fate::Escaping);
                Control::Stop
            } else if y[0] < capture_below {
                fate = Some(Fate::Captured);
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )
    .map_err(step_failure)?;
    Ok(fate.unwrap_or_else(|| {
        if out.y[0] > profile.eval(out.t).abs() {
            Fate::Escaping
        } else {
            Fate::Captured
        }
    }))
}

/// Settings for [`find_separatrix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatrixOptions {
    /// Initial bracket `[sigma_lo, sigma_hi]`; derived from the profile when `None`.
    pub bracket: Option<(f64, f64)>,
    /// Horizon curve is sampled on `[-x0_max, x0_max]`.
    pub x0_horizon_max: f64,
    /// Number of samples of the horizon curve (forced odd so `x0 = 0` is a sample).
    pub samples: usize,
    /// Bisection stops once the bracket is narrower than this.
    pub tol: f64,
}

impl Default for SeparatrixOptions {
    fn default() -> Self {
        Self {
            bracket: None,
            x0_horizon_max: 10.0,
            samples: 201,
            tol: 1e-13,
        }
    }
}

/// The sampled horizon `rho*(x0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonCurve {
    pub x0: Vec<f64>,
    pub rho_star: Vec<f64>,
}

/// Characteristics of a profile together with its separatrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub config: FlowConfig,
    pub sigma_star: f64,
    pub horizon: HorizonCurve,
    /// Bisection steps taken.
    pub iterations: usize,
    /// `|rho*(x0_max) - |A(+inf)||`
    pub future_gap: f64,
    /// `|rho*(-x0_max) - |A(-inf)||`
    pub past_gap: f64,
}

impl FlowMap {
    /// Flow map with a known `sigma*` and no sampled horizon (used when the
    /// horizon is known in closed form, e.g. constant `A`).
    pub fn with_sigma_star(config: FlowConfig, sigma_star: f64) -> Self {
        Self {
            config,
            sigma_star,
            horizon: HorizonCurve {
                x0: vec![0.0],
                rho_star: vec![sigma_star],
            },
            iterations: 0,
            future_gap: f64::NAN,
            past_gap: f64::NAN,
        }
    }

    pub fn profile(&self) -> &VelocityProfile {
        &self.config.profile
    }
}

/// Bisects the launch value at `x0 = 0` between captured and escaping rays,
/// then samples the horizon curve forward and backward from `sigma*`.
pub fn find_separatrix(flow: &FlowConfig, opts: &SeparatrixOptions) -> Result<FlowMap> {
    let profile = flow.profile;
    let (mut lo, mut hi) = opts.bracket.unwrap_or((
        (0.5 * profile.min_speed()).max(2.0 * flow.rho_min),
        1.5 * profile.max_speed(),
    ));
    if !(lo < hi) || lo <= flow.rho_min {
        return Err(Error::Domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    let fate_lo = classify(lo, flow)?;
    let fate_hi = classify(hi, flow)?;
    if fate_lo == fate_hi {
        return Err(Error::Bracket {
            lo,
            hi,
            class: fate_lo.to_string(),
        });
    }
    if fate_lo == Fate::Escaping {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut iterations = 0;
    while (hi - lo).abs() > opts.tol {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        match classify(mid, flow)? {
            Fate::Captured => lo = mid,
            Fate::Escaping => hi = mid,
        }
        iterations += 1;
    }
    let sigma_star = 0.5 * (lo + hi);
    let horizon = sample_horizon(sigma_star, flow, opts.x0_horizon_max, opts.samples)?;
    let future_gap = (horizon.rho_star.last().unwrap() - profile.future_speed()).abs();
    let past_gap = (horizon.rho_star[0] - profile.past_speed()).abs();
    Ok(FlowMap {
        config: *flow,
        sigma_star,
        horizon,
        iterations,
        future_gap,
        past_gap,
    })
}

fn sample_horizon(sigma_star: f64, flow: &FlowConfig, x0_max: f64, samples: usize) -> Result<HorizonCurve> {
    let half = (samples.max(3) - 1).div_ceil(2);
    let dx = x0_max / half as f64;
    let profile = flow.profile;
    let advance = |rho: f64, from: f64, to: f64| -> Result<f64> {
        let out = dopri5(
            |t, y: &[f64; 1]| (y[0] > 0.0).then(|| [profile.eval(t) / y[0] + 1.0]),
            from,
            [rho],
            to,
            flow.opts(),
            |_, _| Control::Continue,
        )
        .map_err(step_failure)?;
        Ok(out.y[0])
    };
    let mut past = Vec::with_capacity(half);
    let mut rho = sigma_star;
    for k in 1..=half {
        rho = advance(rho, -((k - 1) as f64) * dx, -(k as f64) * dx)?;
        past.push(rho);
    }
    // Forward in time the horizon repels neighbouring rays, so the future half
    // is traced backward from far in the future, where it sits at |A(+inf)|.
    let far = x0_max + 30.0 * profile.tau.max(profile.max_speed());
    let mut future = vec![0.0; half];
    rho = advance(profile.future_speed(), far, half as f64 * dx)?;
    future[half - 1] = rho;
    for k in (1..half).rev() {
        rho = advance(rho, (k + 1) as f64 * dx, k as f64 * dx)?;
        future[k - 1] = rho;
    }
    let mut x0 = Vec::with_capacity(2 * half + 1);
    let mut rho_star = Vec::with_capacity(2 * half + 1);
    for k in (1..=half).rev() {
        x0.push(-(k as f64) * dx);
        rho_star.push(past[k - 1]);
    }
    x0.push(0.0);
    rho_star.push(sigma_star);
    for k in 1..=half {
        x0.push(k as f64 * dx);
        rho_star.push(future[k - 1]);
    }
    Ok(HorizonCurve { x0, rho_star })
}

/// Value, first and second `rho`-derivatives of the characteristic label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaJet {
    pub sigma: f64,
    pub dsigma_drho: f64,
    pub d2sigma_drho2: f64,
}

fn variational_rhs(profile: &VelocityProfile, t: f64, y: &[f64; 3]) -> Option<[f64; 3]> {
    let rho = y[0];
    if rho <= 0.0 {
        return None;
    }
    let a = profile.eval(t);
    let a_r2 = a / (rho * rho);
    Some([
        a / rho + 1.0,
        -a_r2 * y[1],
        2.0 * a_r2 / rho * y[1] * y[1] - a_r2 * y[2],
    ])
}

/// Traces the characteristic through `(rho, x0)` back to `x0 = 0` together
/// with its first and second variations.
pub fn sigma_jet(rho: f64, x0: f64, flow: &FlowConfig) -> Result<SigmaJet> {
    if rho.is_nan() || rho < flow.rho_min {
        return Err(Error::Domain(format!(
            "rho = {rho} below rho_min = {}",
            flow.rho_min
        )));
    }
    if x0 == 0.0 {
        return Ok(SigmaJet {
            sigma: rho,
            dsigma_drho: 1.0,
            d2sigma_drho2: 0.0,
        });
    }
    let profile = flow.profile;
    let rho_min = flow.rho_min;
    let mut left = false;
    let out = dopri5(
        |t, y: &[f64; 3]| variational_rhs(&profile, t, y),
        x0,
        [rho, 1.0, 0.0],
        0.0,
        flow.opts(),
        |_, y| {
            if y[0] < rho_min {
                left = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )
    .map_err(step_failure)?;
    if left {
        return Err(Error::Capture { rho, x0 });
    }
    Ok(SigmaJet {
        sigma: out.y[0],
        dsigma_drho: out.y[1],
        d2sigma_drho2: out.y[2],
    })
}

/// `sigma(rho, x0)` and `d sigma / d rho`, by backward integration of the
/// characteristic and its tangent equation.
pub fn sigma_of(rho: f64, x0: f64, flow: &FlowConfig) -> Result<(f64, f64)> {
    let jet = sigma_jet(rho, x0, flow)?;
    Ok((jet.sigma, jet.dsigma_drho))
}

/// Forward map `rho(sigma, x0)` and `d rho / d sigma`.
pub fn rho_of(sigma: f64, x0: f64, flow: &FlowConfig) -> Result<(f64, f64)> {
    if sigma.is_nan() || sigma <= flow.rho_min {
        return Err(Error::Domain(format!(
            "sigma = {sigma} below rho_min = {}",
            flow.rho_min
        )));
    }
    if x0 == 0.0 {
        return Ok((sigma, 1.0));
    }
    let profile = flow.profile;
    let rho_min = flow.rho_min;
    let mut left = false;
    let out = dopri5(
        |t, y: &[f64; 3]| variational_rhs(&profile, t, y),
        0.0,
        [sigma, 1.0, 0.0],
        x0,
        flow.opts(),
        |_, y| {
            if y[0] < rho_min {
                left = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )
    .map_err(step_failure)?;
    if left {
        return Err(Error::Capture { rho: sigma, x0 });
    }
    Ok((out.y[0], out.y[1]))
}
