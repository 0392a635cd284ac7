//! Finite-difference solver for the radial wave equation in the moving fluid,
//! `(d/dx0 + (A/rho) d/drho)^2 f - f_rho_rho - f_rho / rho = 0`.
//! The `f_rho / rho` term can be switched off ([`WaveOperator::Reduced`]).
//!
//! The equation is integrated as a first-order system in `(f, g)` with
//! `g = f_x0 + c f_rho`, `c = A(x0)/rho <= 0`:
//!
//! ```text
//! f_x0 = g - c f_rho
//! g_x0 = f_rho_rho + f_rho / rho - c g_rho
//! ```
//!
//! Advection uses stencils biased toward larger `rho` (the upwind side for
//! `c <= 0`), the second derivative is centered, and time stepping is RK4.
//! Ghost values at both ends come from polynomial extrapolation; the outer end
//! carries a sponge layer.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Drift;
use crate::packet::{exact_mode_spec, mode_initial_data, PointValue};
use crate::spectrum::FieldSample;

const GHOSTS: usize = 3;

/// Spatial accuracy of the finite-difference operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeOrder {
    /// Centered second derivative, second-order upwind first derivative.
    Second,
    /// Centered fourth-order second derivative, fifth-order upwind-biased first derivative.
    Fourth,
}

impl SchemeOrder {
    pub fn nominal(&self) -> u32 {
        match self {
            Self::Second => 2,
            Self::Fourth => 4,
        }
    }
}

impl std::str::FromStr for SchemeOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "2" | "second" => Ok(Self::Second),
            "4" | "fourth" => Ok(Self::Fourth),
            other => Err(Error::Domain(format!("scheme order must be 2 or 4, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for SchemeOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.nominal())
    }
}

/// Spatial part of the wave operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveOperator {
    /// `D^2 f - f_rho_rho`.
    Reduced,
    /// `D^2 f - f_rho_rho - f_rho / rho`, the axisymmetric operator whose
    /// `rho`-weighted Klein-Gordon current is conserved.
    Radial,
}

impl std::str::FromStr for WaveOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "reduced" => Ok(Self::Reduced),
            "radial" => Ok(Self::Radial),
            other => Err(Error::Domain(format!("operator must be `reduced` or `radial`, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for WaveOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Reduced => "reduced",
            Self::Radial => "radial",
        })
    }
}

/// Uniform radial grid, time step and outer sponge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub rho_min: f64,
    pub rho_max: f64,
    pub n_rho: usize,
    pub dt: f64,
    pub order: SchemeOrder,
    /// Damping acts on `[sponge_start, rho_max]`.
    pub sponge_start: f64,
    pub sponge_strength: f64,
    pub operator: WaveOperator,
}

/// Largest admissible `dt * (1 + max|A|/rho_min) / h`.
pub const CFL_SAFE: f64 = 1.0;

impl RadialGrid {
    pub fn new(rho_min: f64, rho_max: f64, n_rho: usize, dt: f64, order: SchemeOrder) -> Result<Self> {
        if !(rho_min > 0.0 && rho_max > rho_min) {
            return Err(Error::Domain(format!(
                "need 0 < rho_min < rho_max, got [{rho_min}, {rho_max}]"
            )));
        }
        if n_rho < 16 {
            return Err(Error::Domain(format!("need at least 16 grid points, got {n_rho}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            rho_min,
            rho_max,
            n_rho,
            dt,
            order,
            sponge_start: rho_max - 0.1 * (rho_max - rho_min),
            sponge_strength: 40.0,
            operator: WaveOperator::Radial,
        })
    }

    /// Grid whose time step is `cfl * h / (1 + max_drift / rho_min)`.
    pub fn with_cfl(rho_min: f64, rho_max: f64, n_rho: usize, cfl: f64, max_drift: f64, order: SchemeOrder) -> Result<Self> {
        let h = (rho_max - rho_min) / (n_rho.max(2) - 1) as f64;
        Self::new(rho_min, rho_max, n_rho, cfl * h / (1.0 + max_drift / rho_min), order)
    }

    pub fn with_sponge(mut self, start: f64, strength: f64) -> Result<Self> {
        if !(start > self.rho_min && start <= self.rho_max && strength >= 0.0) {
            return Err(Error::Domain(format!("invalid sponge start {start} / strength {strength}")));
        }
        self.sponge_start = start;
        self.sponge_strength = strength;
        Ok(self)
    }

    pub fn with_operator(mut self, operator: WaveOperator) -> Self {
        self.operator = operator;
        self
    }

    pub fn h(&self) -> f64 {
        (self.rho_max - self.rho_min) / (self.n_rho - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.rho_min + i as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_rho).map(|i| self.node(i)).collect()
    }

    pub fn check_cfl(&self, max_drift: f64) -> Result<()> {
        let limit = CFL_SAFE * self.h() / (1.0 + max_drift / self.rho_min);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "time step {} exceeds the stability limit {limit}",
                self.dt
            )));
        }
        Ok(())
    }

    /// Same domain with `h` and `dt` halved; old nodes are every other new node.
    pub fn refined(&self) -> Self {
        Self {
            n_rho: 2 * self.n_rho - 1,
            dt: 0.5 * self.dt,
            ..*self
        }
    }

    fn sponge_profile(&self) -> Vec<f64> {
        let width = self.rho_max - self.sponge_start;
        (0..self.n_rho)
            .map(|i| {
                let r = self.node(i);
                if r <= self.sponge_start || width <= 0.0 {
                    0.0
                } else {
                    let x = (r - self.sponge_start) / width;
                    self.sponge_strength * x * x
                }
            })
            .collect()
    }
}

/// Field value and its time derivative on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub x0: f64,
    pub value: Vec<Complex64>,
    pub dvalue_dx0: Vec<Complex64>,
}

/// Solver variables: `f` and `g = f_x0 + (A/rho) f_rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub x0: f64,
    pub f: Vec<Complex64>,
    pub g: Vec<Complex64>,
}

/// Still medium, `A = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StillMedium;

impl Drift for StillMedium {
    fn strength(&self, _x0: f64) -> f64 {
        0.0
    }
}

/// Constant drift strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantDrift(pub f64);

impl Drift for ConstantDrift {
    fn strength(&self, _x0: f64) -> f64 {
        self.0
    }
}

fn pad_into(src: &[Complex64], order: SchemeOrder, out: &mut [Complex64]) {
    let n = src.len();
    out[GHOSTS..GHOSTS + n].copy_from_slice(src);
    // extrapolation coefficients for the next point beyond an end
    let coef: &[f64] = match order {
        SchemeOrder::Second => &[4.0, -6.0, 4.0, -1.0],
        SchemeOrder::Fourth => &[5.0, -10.0, 10.0, -5.0, 1.0],
    };
    for g in 0..GHOSTS {
        let target = GHOSTS - 1 - g;
        let mut v = Complex64::new(0.0, 0.0);
        for (k, c) in coef.iter().enumerate() {
            v += *c * out[target + 1 + k];
        }
        out[target] = v;
        let target = GHOSTS + n + g;
        let mut v = Complex64::new(0.0, 0.0);
        for (k, c) in coef.iter().enumerate() {
            v += *c * out[target - 1 - k];
        }
        out[target] = v;
    }
}

/// Upwind-biased first derivative for drift toward smaller `rho`.
fn d1_upwind(p: &[Complex64], h: f64, order: SchemeOrder, out: &mut [Complex64]) {
    let n = out.len();
    match order {
        SchemeOrder::Second => {
            let s = 1.0 / (2.0 * h);
            for i in 0..n {
                let j = i + GHOSTS;
                out[i] = (-3.0 * p[j] + 4.0 * p[j + 1] - p[j + 2]) * s;
            }
        }
        SchemeOrder::Fourth => {
            let s = 1.0 / (60.0 * h);
            for i in 0..n {
                let j = i + GHOSTS;
                out[i] = (3.0 * p[j - 2] - 30.0 * p[j - 1] - 20.0 * p[j] + 60.0 * p[j + 1] - 15.0 * p[j + 2]
                    + 2.0 * p[j + 3])
                    * s;
            }
        }
    }
}

fn d2_centered(p: &[Complex64], h: f64, order: SchemeOrder, out: &mut [Complex64]) {
    let n = out.len();
    match order {
        SchemeOrder::Second => {
            let s = 1.0 / (h * h);
            for i in 0..n {
                let j = i + GHOSTS;
                out[i] = (p[j - 1] - 2.0 * p[j] + p[j + 1]) * s;
            }
        }
        SchemeOrder::Fourth => {
            let s = 1.0 / (12.0 * h * h);
            for i in 0..n {
                let j = i + GHOSTS;
                out[i] = (-p[j - 2] + 16.0 * p[j - 1] - 30.0 * p[j] + 16.0 * p[j + 1] - p[j + 2]) * s;
            }
        }
    }
}

/// Centered sixth-order first derivative with one-sided closures at the ends.
pub fn d1_centered(f: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = f.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if n < 7 {
        for i in 0..n {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            out[i] = (f[b] - f[a]) / ((b - a) as f64 * h);
        }
        return out;
    }
    let s = 1.0 / (60.0 * h);
    for i in 3..n - 3 {
        out[i] = (-f[i - 3] + 9.0 * f[i - 2] - 45.0 * f[i - 1] + 45.0 * f[i + 1] - 9.0 * f[i + 2] + f[i + 3]) * s;
    }
    // fourth-order one-sided closures
    let s = 1.0 / (12.0 * h);
    for i in 0..3 {
        out[i] = (-25.0 * f[i] + 48.0 * f[i + 1] - 36.0 * f[i + 2] + 16.0 * f[i + 3] - 3.0 * f[i + 4]) * s;
        let j = n - 1 - i;
        out[j] = (25.0 * f[j] - 48.0 * f[j - 1] + 36.0 * f[j - 2] - 16.0 * f[j - 3] + 3.0 * f[j - 4]) * s;
    }
    out
}

/// Time stepper with preallocated work arrays.
pub struct WaveSolver<'a> {
    grid: RadialGrid,
    drift: &'a dyn Drift,
    inv_rho: Vec<f64>,
    sponge: Vec<f64>,
    /// Per-step growth factor of the max norm that triggers an instability error.
    pub growth_bound: f64,
    pad: Vec<Complex64>,
    df: Vec<Complex64>,
    dg: Vec<Complex64>,
    d2: Vec<Complex64>,
    stages: [Vec<Complex64>; 8],
    tmp_f: Vec<Complex64>,
    tmp_g: Vec<Complex64>,
}

impl<'a> WaveSolver<'a> {
    pub fn new(grid: RadialGrid, drift: &'a dyn Drift) -> Result<Self> {
        let n = grid.n_rho;
        let z = vec![Complex64::new(0.0, 0.0); n];
        Ok(Self {
            inv_rho: grid.nodes().iter().map(|r| 1.0 / r).collect(),
            sponge: grid.sponge_profile(),
            grid,
            drift,
            growth_bound: 1.5,
            pad: vec![Complex64::new(0.0, 0.0); n + 2 * GHOSTS],
            df: z.clone(),
            dg: z.clone(),
            d2: z.clone(),
            stages: std::array::from_fn(|_| z.clone()),
            tmp_f: z.clone(),
            tmp_g: z,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    fn strength(&self, x0: f64) -> Result<f64> {
        let a = self.drift.strength(x0);
        if a > 0.0 {
            return Err(Error::Domain(format!(
                "outward drift A = {a} at x0 = {x0} is not supported by the upwind scheme"
            )));
        }
        Ok(a)
    }

    /// Writes `(f_x0, g_x0)` into stage slot `k` (f) and `k + 3` (g).
    fn rhs(&mut self, t: f64, use_tmp: bool, k: usize) -> Result<()> {
        let a = self.strength(t)?;
        let h = self.grid.h();
        let order = self.grid.order;
        let radial = match self.grid.operator {
            WaveOperator::Reduced => 0.0,
            WaveOperator::Radial => 1.0,
        };
        let mut kf = std::mem::take(&mut self.stages[k]);
        let mut kg = std::mem::take(&mut self.stages[k + 3]);
        let (f, g) = if use_tmp {
            (&self.tmp_f, &self.tmp_g)
        } else {
            (&self.stages[6], &self.stages[7])
        };
        pad_into(f, order, &mut self.pad);
        d1_upwind(&self.pad, h, order, &mut self.df);
        d2_centered(&self.pad, h, order, &mut self.d2);
        pad_into(g, order, &mut self.pad);
        d1_upwind(&self.pad, h, order, &mut self.dg);
        for i in 0..self.grid.n_rho {
            let c = a * self.inv_rho[i];
            let damp = self.sponge[i];
            kf[i] = g[i] - c * self.df[i] - damp * f[i];
            kg[i] = self.d2[i] - c * self.dg[i] - damp * g[i] + radial * self.inv_rho[i] * self.df[i];
        }
        self.stages[k] = kf;
        self.stages[k + 3] = kg;
        Ok(())
    }

    /// One RK4 step of size `grid.dt`.
    pub fn step(&mut self, s: &mut WaveState) -> Result<()> {
        let dt = self.grid.dt;
        let n = self.grid.n_rho;
        let before = max_norm(&s.f).max(max_norm(&s.g));
        // stage slots: k1..k3 at 0..2 (f) and 3..5 (g); current state copied to 6, 7
        self.stages[6].copy_from_slice(&s.f);
        self.stages[7].copy_from_slice(&s.g);
        let mut acc_f = s.f.clone();
        let mut acc_g = s.g.clone();
        let weights = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
        let offsets = [0.0, 0.5, 0.5, 1.0];
        for stage in 0..4 {
            let t = s.x0 + offsets[stage] * dt;
            let slot = stage.min(2);
            if stage == 0 {
                self.rhs(t, false, slot)?;
            } else {
                self.rhs(t, true, slot)?;
            }
            let (kf, kg) = (&self.stages[slot], &self.stages[slot + 3]);
            for i in 0..n {
                acc_f[i] += dt * weights[stage] * kf[i];
                acc_g[i] += dt * weights[stage] * kg[i];
            }
            if stage < 3 {
                let next = offsets[stage + 1] * dt;
                for i in 0..n {
                    self.tmp_f[i] = s.f[i] + next * self.stages[slot][i];
                    self.tmp_g[i] = s.g[i] + next * self.stages[slot + 3][i];
                }
            }
        }
        let after = max_norm(&acc_f).max(max_norm(&acc_g));
        let factor = if before > 0.0 { after / before } else if after > 0.0 { f64::INFINITY } else { 1.0 };
        if !after.is_finite() || factor > self.growth_bound {
            return Err(Error::Instability {
                x0: s.x0 + dt,
                factor,
            });
        }
        s.f = acc_f;
        s.g = acc_g;
        s.x0 += dt;
        Ok(())
    }

    /// `(f, g)` from value and time derivative: `g = f_t + c f_rho`.
    pub fn to_wave_state(&mut self, state: &FieldState) -> Result<WaveState> {
        self.check_len(state.value.len())?;
        let a = self.strength(state.x0)?;
        pad_into(&state.value, self.grid.order, &mut self.pad);
        d1_upwind(&self.pad, self.grid.h(), self.grid.order, &mut self.df);
        let g = (0..self.grid.n_rho)
            .map(|i| state.dvalue_dx0[i] + a * self.inv_rho[i] * self.df[i])
            .collect();
        Ok(WaveState {
            x0: state.x0,
            f: state.value.clone(),
            g,
        })
    }

    pub fn to_field_state(&mut self, s: &WaveState) -> Result<FieldState> {
        self.check_len(s.f.len())?;
        let a = self.strength(s.x0)?;
        pad_into(&s.f, self.grid.order, &mut self.pad);
        d1_upwind(&self.pad, self.grid.h(), self.grid.order, &mut self.df);
        let dvalue_dx0 = (0..self.grid.n_rho)
            .map(|i| s.g[i] - a * self.inv_rho[i] * self.df[i])
            .collect();
        Ok(FieldState {
            x0: s.x0,
            value: s.f.clone(),
            dvalue_dx0,
        })
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.grid.n_rho {
            return Err(Error::GridMismatch(format!(
                "state has {n} nodes, grid has {}",
                self.grid.n_rho
            )));
        }
        Ok(())
    }

    /// Steps until `x0` reaches `t_final`, recording the states at `outputs`
    /// (each rounded to the nearest step). The step count is rounded up so the
    /// last step lands on `t_final` with `dt` reduced accordingly.
    pub fn run(&mut self, mut s: WaveState, t_final: f64, outputs: &[f64]) -> Result<Vec<WaveState>> {
        let span = t_final - s.x0;
        if span < 0.0 {
            return Err(Error::Domain(format!("final time {t_final} precedes the start {}", s.x0)));
        }
        let steps = (span / self.grid.dt).ceil() as usize;
        let nominal = self.grid.dt;
        if steps > 0 {
            self.grid.dt = span / steps as f64;
        }
        let t0 = s.x0;
        let mut marks: Vec<usize> = outputs
            .iter()
            .map(|t| (((t - t0) / self.grid.dt).round().max(0.0) as usize).min(steps))
            .collect();
        marks.sort_unstable();
        let mut out = Vec::with_capacity(marks.len());
        let mut next = 0;
        let result = (|| {
            for k in 0..=steps {
                while next < marks.len() && marks[next] == k {
                    out.push(s.clone());
                    next += 1;
                }
                if k < steps {
                    self.step(&mut s)?;
                    // avoid drift of the clock from repeated additions
                    s.x0 = t0 + (k + 1) as f64 * self.grid.dt;
                }
            }
            Ok(())
        })();
        self.grid.dt = nominal;
        result.map(|_| out)
    }
}

fn max_norm(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Advances a field state by one time step.
pub fn step_wave(state: &FieldState, grid: &RadialGrid, drift: &dyn Drift) -> Result<FieldState> {
    let mut solver = WaveSolver::new(*grid, drift)?;
    let mut s = solver.to_wave_state(state)?;
    solver.step(&mut s)?;
    solver.to_field_state(&s)
}

/// Smooth cutoff equal to one up to `flat_end` and zero beyond `taper_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataWindow {
    pub flat_end: f64,
    pub taper_end: f64,
}

impl DataWindow {
    pub fn eval(&self, rho: f64) -> f64 {
        if rho <= self.flat_end {
            1.0
        } else if rho >= self.taper_end {
            0.0
        } else {
            let x = (rho - self.flat_end) / (self.taper_end - self.flat_end);
            0.5 * (1.0 + (PI * x).cos())
        }
    }
}

/// Minimum points per wavelength accepted by [`solve_mode`].
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 16.0;

/// Checks that `|eta|` is resolved by the grid.
pub fn check_resolution(eta: f64, grid: &RadialGrid) -> Result<()> {
    let ppw = 2.0 * PI / (eta.abs() * grid.h());
    if ppw < MIN_POINTS_PER_WAVELENGTH {
        return Err(Error::Resolution(format!(
            "|eta| = {} gives {ppw:.1} points per wavelength (< {MIN_POINTS_PER_WAVELENGTH})",
            eta.abs()
        )));
    }
    Ok(())
}

/// Exact mode for `eta < 0` (windowed plane-wave data at `x0 = 0`),
/// returned at the requested output times.
pub fn solve_mode(
    eta: f64,
    grid: &RadialGrid,
    drift: &dyn Drift,
    t_final: f64,
    window: DataWindow,
    outputs: &[f64],
) -> Result<Vec<WaveState>> {
    let spec = exact_mode_spec(eta)?;
    check_resolution(eta, grid)?;
    let a0 = drift.strength(0.0);
    let nodes = grid.nodes();
    let mut value = Vec::with_capacity(nodes.len());
    let mut dvalue = Vec::with_capacity(nodes.len());
    for r in &nodes {
        let (v, d) = mode_initial_data(spec, *r, a0 / r);
        let w = window.eval(*r);
        value.push(w * v);
        dvalue.push(w * d);
    }
    let mut solver = WaveSolver::new(*grid, drift)?;
    let s = solver.to_wave_state(&FieldState {
        x0: 0.0,
        value,
        dvalue_dx0: dvalue,
    })?;
    solver.run(s, t_final, outputs)
}

/// Field samples (value, `rho` and `x0` derivatives) for the Klein-Gordon product.
pub fn field_sample(s: &WaveState, grid: &RadialGrid, drift: &dyn Drift) -> FieldSample {
    let a = drift.strength(s.x0);
    let nodes = grid.nodes();
    let d_rho = d1_centered(&s.f, grid.h());
    let d_x0 = (0..nodes.len()).map(|i| s.g[i] - a / nodes[i] * d_rho[i]).collect();
    FieldSample {
        rho: nodes,
        value: s.f.clone(),
        d_x0,
        d_rho,
    }
}

/// Errors of the d'Alembert traveling wave `f = G(rho - x0)` under grid refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub n_rho: Vec<usize>,
    /// Max-norm error against the exact solution at `t_final`.
    pub errors: Vec<f64>,
    /// Observed orders from successive errors.
    pub orders: Vec<f64>,
    /// Observed order from the three finest solutions compared with each other.
    pub self_convergence_order: f64,
}

/// Still-medium convergence study with the reduced operator (`f_x0x0 = f_rho_rho`):
/// a Gaussian pulse centered at `rho = 8` moving outward to `rho = 8 + t_final`, on `[1, 21]`.
pub fn dalembert_convergence(order: SchemeOrder, n_base: usize, levels: usize, t_final: f64) -> Result<ConvergenceStudy> {
    if levels < 3 {
        return Err(Error::Domain("need at least three refinement levels".into()));
    }
    let pulse = |x: f64| Complex64::new((-(x - 8.0) * (x - 8.0)).exp(), 0.0);
    let dpulse = |x: f64| -2.0 * (x - 8.0) * pulse(x);
    let mut grid = RadialGrid::with_cfl(1.0, 21.0, n_base, 0.5, 0.0, order)?.with_operator(WaveOperator::Reduced);
    let mut n_rho = Vec::new();
    let mut errors = Vec::new();
    let mut finals: Vec<Vec<Complex64>> = Vec::new();
    for _ in 0..levels {
        let nodes = grid.nodes();
        let state = FieldState {
            x0: 0.0,
            value: nodes.iter().map(|r| pulse(*r)).collect(),
            dvalue_dx0: nodes.iter().map(|r| -dpulse(*r)).collect(),
        };
        let mut solver = WaveSolver::new(grid, &StillMedium)?;
        let s = solver.to_wave_state(&state)?;
        let end = solver.run(s, t_final, &[t_final])?.pop().unwrap();
        let err = nodes
            .iter()
            .zip(&end.f)
            .fold(0.0f64, |m, (r, v)| m.max((v - pulse(r - t_final)).norm()));
        n_rho.push(grid.n_rho);
        errors.push(err);
        finals.push(end.f);
        grid = grid.refined();
    }
    let orders = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    // compare the three finest levels on the coarsest of them
    let k = levels - 3;
    let (c, m, f) = (&finals[k], &finals[k + 1], &finals[k + 2]);
    let mut d_cm = 0.0f64;
    let mut d_mf = 0.0f64;
    for i in 0..c.len() {
        d_cm = d_cm.max((c[i] - m[2 * i]).norm());
        d_mf = d_mf.max((m[2 * i] - f[4 * i]).norm());
    }
    Ok(ConvergenceStudy {
        n_rho,
        errors,
        orders,
        self_convergence_order: (d_cm / d_mf).log2(),
    })
}

/// Barycentric Lagrange interpolation on a uniform grid with `npts` nodes
/// around `x` (clamped at the ends).
pub fn interpolate_uniform(values: &[Complex64], x_first: f64, h: f64, x: f64, npts: usize) -> Complex64 {
    let n = values.len();
    let m = npts.min(n);
    let pos = (x - x_first) / h;
    let start = ((pos.floor() as isize) - (m as isize / 2 - 1)).clamp(0, (n - m) as isize) as usize;
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    let mut binom = 1.0;
    for j in 0..m {
        if j > 0 {
            binom *= (m - j) as f64 / j as f64;
        }
        let d = pos - (start + j) as f64;
        if d == 0.0 {
            return values[start + j];
        }
        let w = if j % 2 == 0 { binom } else { -binom } / d;
        num += w * values[start + j];
        den += w;
    }
    num / den
}

/// Value, `rho` derivative and `g` of a gridded field at an arbitrary point,
/// returned as `(value, d_rho, d_x0)` for drift `c = a / rho`.
pub struct GridField<'g> {
    pub f: &'g [Complex64],
    pub f_rho: Vec<Complex64>,
    pub g: &'g [Complex64],
    pub x_first: f64,
    pub h: f64,
    pub npts: usize,
}

impl<'g> GridField<'g> {
    pub fn new(f: &'g [Complex64], g: &'g [Complex64], grid: &RadialGrid) -> Self {
        Self {
            f,
            f_rho: d1_centered(f, grid.h()),
            g,
            x_first: grid.rho_min,
            h: grid.h(),
            npts: 8,
        }
    }

    pub fn at(&self, rho: f64, a: f64) -> PointValue {
        let v = interpolate_uniform(self.f, self.x_first, self.h, rho, self.npts);
        let d = interpolate_uniform(&self.f_rho, self.x_first, self.h, rho, self.npts);
        let g = interpolate_uniform(self.g, self.x_first, self.h, rho, self.npts);
        PointValue {
            value: v,
            d_rho: d,
            d_x0: g - a / rho * d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::VelocityProfile;
    use crate::spectrum::kg_inner;
    use approx::assert_relative_eq;

    #[test]
    fn grid_basics() {
        let g = RadialGrid::new(0.5, 10.5, 101, 0.01, SchemeOrder::Second).unwrap();
        assert_relative_eq!(g.h(), 0.1, max_relative = 1e-14);
        assert_eq!(g.nodes().len(), 101);
        let r = g.refined();
        assert_eq!(r.n_rho, 201);
        assert_relative_eq!(r.node(2), g.node(1), max_relative = 1e-14);
        assert!(g.check_cfl(1.0).is_ok());
        let bad = RadialGrid::new(0.5, 10.5, 101, 0.2, SchemeOrder::Second).unwrap();
        assert!(bad.check_cfl(1.0).is_err());
        assert!(RadialGrid::new(0.0, 1.0, 101, 0.01, SchemeOrder::Second).is_err());
        assert_eq!("4".parse::<SchemeOrder>().unwrap(), SchemeOrder::Fourth);
        assert!("3".parse::<SchemeOrder>().is_err());
    }

    #[test]
    fn stencils_are_exact_on_polynomials() {
        let h = 0.1;
        let x: Vec<f64> = (0..20).map(|i| 1.0 + i as f64 * h).collect();
        for (order, deg) in [(SchemeOrder::Second, 2), (SchemeOrder::Fourth, 4)] {
            let f: Vec<Complex64> = x.iter().map(|v| Complex64::new(v.powi(deg), 0.0)).collect();
            let mut pad = vec![Complex64::new(0.0, 0.0); f.len() + 2 * GHOSTS];
            pad_into(&f, order, &mut pad);
            let mut d1 = vec![Complex64::new(0.0, 0.0); f.len()];
            let mut d2 = d1.clone();
            d1_upwind(&pad, h, order, &mut d1);
            d2_centered(&pad, h, order, &mut d2);
            for i in 0..x.len() {
                let e1 = deg as f64 * x[i].powi(deg - 1);
                let e2 = (deg * (deg - 1)) as f64 * x[i].powi(deg - 2);
                assert!((d1[i].re - e1).abs() < 1e-9 * e1.abs().max(1.0), "{order:?} d1 at {i}");
                assert!((d2[i].re - e2).abs() < 1e-7 * e2.abs().max(1.0), "{order:?} d2 at {i}");
            }
        }
        let f: Vec<Complex64> = x.iter().map(|v| Complex64::new(v.powi(4), v.powi(3))).collect();
        let d = d1_centered(&f, h);
        for i in 0..x.len() {
            let e = Complex64::new(4.0 * x[i].powi(3), 3.0 * x[i].powi(2));
            assert!((d[i] - e).norm() < 1e-9 * e.norm());
        }
    }

    #[test]
    fn interpolation_is_exact_for_polynomials() {
        let h = 0.25;
        let vals: Vec<Complex64> = (0..30).map(|i| {
            let x = 2.0 + i as f64 * h;
            Complex64::new(x.powi(5) - x, x * x)
        }).collect();
        for x in [2.0, 2.1, 3.33, 9.24, 9.25] {
            let v = interpolate_uniform(&vals, 2.0, h, x, 8);
            let e = Complex64::new(x.powi(5) - x, x * x);
            assert!((v - e).norm() < 1e-9 * e.norm(), "x={x}");
        }
    }

    #[test]
    fn initial_state_is_the_mode_data() {
        let grid = RadialGrid::with_cfl(0.4, 10.0, 801, 0.8, 1.2, SchemeOrder::Fourth).unwrap();
        let profile = VelocityProfile::smooth_step(-1.2, -0.8, 1.0).unwrap();
        let window = DataWindow { flat_end: 8.0, taper_end: 8.8 };
        let s = solve_mode(-2.0, &grid, &profile, 0.1, window, &[0.0]).unwrap().pop().unwrap();
        assert_eq!(s.x0, 0.0);
        let spec = exact_mode_spec(-2.0).unwrap();
        for (i, r) in grid.nodes().iter().enumerate().step_by(37) {
            let (v, _) = mode_initial_data(spec, *r, -1.0 / r);
            assert!((s.f[i] - window.eval(*r) * v).norm() < 1e-15);
        }
    }

    #[test]
    fn dalembert_second_order() {
        let study = dalembert_convergence(SchemeOrder::Second, 201, 4, 2.0).unwrap();
        assert!(study.self_convergence_order > 1.9, "{study:?}");
        for o in &study.orders[1..] {
            assert!(*o > 1.8, "{study:?}");
        }
    }

    #[test]
    fn dalembert_fourth_order() {
        let study = dalembert_convergence(SchemeOrder::Fourth, 201, 3, 2.0).unwrap();
        assert!(study.orders.last().unwrap() > &3.5, "{study:?}");
    }

    #[test]
    fn resolution_guard() {
        let grid = RadialGrid::with_cfl(0.4, 10.0, 201, 0.8, 1.2, SchemeOrder::Second).unwrap();
        let profile = VelocityProfile::constant(-1.0).unwrap();
        let window = DataWindow { flat_end: 8.0, taper_end: 8.8 };
        assert!(matches!(
            solve_mode(-40.0, &grid, &profile, 0.1, window, &[0.1]),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn instability_is_detected() {
        let mut grid = RadialGrid::with_cfl(0.4, 10.0, 401, 0.8, 1.2, SchemeOrder::Second).unwrap();
        grid.dt *= 8.0;
        let profile = VelocityProfile::constant(-1.0).unwrap();
        let window = DataWindow { flat_end: 8.0, taper_end: 8.8 };
        assert!(matches!(
            solve_mode(-3.0, &grid, &profile, 2.0, window, &[2.0]),
            Err(Error::Instability { .. })
        ));
    }

    #[test]
    fn step_wave_round_trip() {
        let grid = RadialGrid::with_cfl(1.0, 21.0, 401, 0.5, 0.0, SchemeOrder::Fourth)
            .unwrap()
            .with_operator(WaveOperator::Reduced);
        let nodes = grid.nodes();
        let pulse = |x: f64| (-(x - 8.0) * (x - 8.0)).exp();
        let st = FieldState {
            x0: 0.0,
            value: nodes.iter().map(|r| Complex64::new(pulse(*r), 0.0)).collect(),
            dvalue_dx0: nodes.iter().map(|r| Complex64::new(2.0 * (r - 8.0) * pulse(*r), 0.0)).collect(),
        };
        let next = step_wave(&st, &grid, &StillMedium).unwrap();
        assert_relative_eq!(next.x0, grid.dt, max_relative = 1e-15);
        for (i, r) in nodes.iter().enumerate() {
            assert!((next.value[i].re - pulse(r - grid.dt)).abs() < 1e-6);
        }
        let wrong = FieldState { value: vec![Complex64::new(0.0, 0.0); 3], ..st };
        assert!(matches!(step_wave(&wrong, &grid, &StillMedium), Err(Error::GridMismatch(_))));
    }

    fn stationary_products(operator: WaveOperator) -> (Complex64, Complex64) {
        let grid = RadialGrid::with_cfl(0.4, 14.0, 1361, 0.8, 1.0, SchemeOrder::Fourth)
            .unwrap()
            .with_operator(operator);
        let drift = ConstantDrift(-1.0);
        let nodes = grid.nodes();
        let bump = |r: f64, c: f64| (-(r - c) * (r - c) / 0.5).exp();
        let make = |k: f64, c: f64| {
            let spec = exact_mode_spec(-k).unwrap();
            let mut value = Vec::new();
            let mut dv = Vec::new();
            for r in &nodes {
                let (v, d) = mode_initial_data(spec, *r, -1.0 / r);
                value.push(bump(*r, c) * v);
                dv.push(bump(*r, c) * d);
            }
            FieldState { x0: 0.0, value, dvalue_dx0: dv }
        };
        let run = |st: FieldState| {
            let mut solver = WaveSolver::new(grid, &drift).unwrap();
            let s = solver.to_wave_state(&st).unwrap();
            solver.run(s, 2.0, &[0.0, 2.0]).unwrap()
        };
        let u = run(make(2.0, 6.0));
        let v = run(make(2.5, 6.5));
        let p0 = kg_inner(&field_sample(&u[0], &grid, &drift), &field_sample(&v[0], &grid, &drift), 0.0, &drift).unwrap();
        let p1 = kg_inner(&field_sample(&u[1], &grid, &drift), &field_sample(&v[1], &grid, &drift), 2.0, &drift).unwrap();
        (p0, p1)
    }

    #[test]
    fn stationary_product_is_conserved() {
        // two localized solutions in a constant flow: their KG product does not depend on x0
        let (p0, p1) = stationary_products(WaveOperator::Radial);
        assert!(p0.norm() > 1e-3);
        assert!((p1 - p0).norm() < 1e-6 * p0.norm(), "{p0} vs {p1}");
    }

    #[test]
    fn reduced_operator_breaks_the_product() {
        let (p0, p1) = stationary_products(WaveOperator::Reduced);
        assert!((p1 - p0).norm() > 0.05 * p0.norm(), "{p0} vs {p1}");
    }
}
