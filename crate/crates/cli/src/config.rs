//! Run configuration: `key = value` lines, one setting per line, `#` comments.
//!
//! Every setting has a default; a config file and `--set key=value` overrides
//! are applied on top in that order. [`RunConfig::to_kv_string`] writes all
//! keys in a fixed order and parses back to an identical config.

use std::path::Path;

use acoustic_hawking::flow::{FlowConfig, ProfileForm, SeparatrixOptions, VelocityProfile};
use acoustic_hawking::remainder::RemainderConfig;
use acoustic_hawking::wave::{DataWindow, RadialGrid, SchemeOrder, WaveOperator};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Settings of the finite-difference remainder study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSettings {
    pub rho_min: f64,
    pub rho_max: f64,
    pub n_rho: usize,
    /// `None` picks `dt` from `cfl`.
    pub dt: Option<f64>,
    pub cfl: f64,
    pub t_final: f64,
    pub order: SchemeOrder,
    pub operator: WaveOperator,
    pub eta_list: Vec<f64>,
    pub probe_a: f64,
    pub a_values: Vec<f64>,
    pub window_flat: f64,
    pub window_taper: f64,
    pub sponge_start: f64,
    pub sponge_strength: f64,
    pub u_nodes: usize,
    pub u_max: f64,
    pub coarse_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile_form: ProfileForm,
    pub a_minus: f64,
    pub a_plus: f64,
    pub tau: f64,
    pub ode_tol: f64,
    pub flow_rho_min: f64,
    pub horizon_x0_max: f64,
    pub horizon_samples: usize,
    pub bisection_tol: f64,
    pub alpha: f64,
    pub eps: f64,
    pub a_values: Vec<f64>,
    pub numeric_norm: bool,
    pub profile_span: f64,
    pub profile_points: usize,
    pub eta_max: f64,
    pub eta_points: usize,
    pub quad_tol: f64,
    pub limit_a_values: Vec<f64>,
    pub pde: PdeSettings,
    pub out_dir: String,
    /// Leave run-dependent metadata (timestamps, timings) out of the outputs.
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile_form: ProfileForm::SmoothStep,
            a_minus: -1.2,
            a_plus: -0.8,
            tau: 1.0,
            ode_tol: 1e-12,
            flow_rho_min: 1e-3,
            horizon_x0_max: 10.0,
            horizon_samples: 201,
            bisection_tol: 1e-13,
            alpha: 1.0,
            eps: 0.25,
            a_values: vec![8.0, 16.0, 32.0],
            numeric_norm: true,
            profile_span: 2.0,
            profile_points: 401,
            eta_max: 128.0,
            eta_points: 513,
            quad_tol: 1e-10,
            limit_a_values: vec![4.0, 8.0, 16.0, 32.0, 64.0],
            pde: PdeSettings {
                rho_min: 0.4,
                rho_max: 10.0,
                n_rho: 4096,
                dt: None,
                cfl: 0.8,
                t_final: 1.0,
                order: SchemeOrder::Fourth,
                operator: WaveOperator::Radial,
                eta_list: vec![2.0, 6.0, 18.0],
                probe_a: 16.0,
                a_values: vec![8.0, 16.0, 32.0],
                window_flat: 8.0,
                window_taper: 8.8,
                sponge_start: 9.0,
                sponge_strength: 40.0,
                u_nodes: 8,
                u_max: 2.0,
                coarse_check: true,
            },
            out_dir: "out".into(),
            deterministic: true,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.trim().parse::<f64>().map_err(|e| ConfigError::Value {
        key: key.into(),
        msg: e.to_string(),
    })
}

fn parse_usize(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.trim().parse::<usize>().map_err(|e| ConfigError::Value {
        key: key.into(),
        msg: e.to_string(),
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(ConfigError::Value {
            key: key.into(),
            msg: format!("expected true or false, got `{other}`"),
        }),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_f64(key, s))
        .collect()
}

fn parse_with<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| ConfigError::Value {
        key: key.into(),
        msg: e.to_string(),
    })
}

fn list_str(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let k = key.trim();
        let v = value.trim();
        match k {
            "profile.form" => self.profile_form = parse_with(k, v)?,
            "profile.a_minus" => self.a_minus = parse_f64(k, v)?,
            "profile.a_plus" => self.a_plus = parse_f64(k, v)?,
            "profile.tau" => self.tau = parse_f64(k, v)?,
            "flow.ode_tol" => self.ode_tol = parse_f64(k, v)?,
            "flow.rho_min" => self.flow_rho_min = parse_f64(k, v)?,
            "horizon.x0_max" => self.horizon_x0_max = parse_f64(k, v)?,
            "horizon.samples" => self.horizon_samples = parse_usize(k, v)?,
            "horizon.tol" => self.bisection_tol = parse_f64(k, v)?,
            "packet.alpha" => self.alpha = parse_f64(k, v)?,
            "packet.eps" => self.eps = parse_f64(k, v)?,
            "packet.a_values" => self.a_values = parse_list(k, v)?,
            "packet.numeric_norm" => self.numeric_norm = parse_bool(k, v)?,
            "packet.profile_span" => self.profile_span = parse_f64(k, v)?,
            "packet.profile_points" => self.profile_points = parse_usize(k, v)?,
            "eta.max" => self.eta_max = parse_f64(k, v)?,
            "eta.points" => self.eta_points = parse_usize(k, v)?,
            "quad.tol" => self.quad_tol = parse_f64(k, v)?,
            "limit.a_values" => self.limit_a_values = parse_list(k, v)?,
            "pde.rho_min" => self.pde.rho_min = parse_f64(k, v)?,
            "pde.rho_max" => self.pde.rho_max = parse_f64(k, v)?,
            "pde.n_rho" => self.pde.n_rho = parse_usize(k, v)?,
            "pde.dt" => {
                self.pde.dt = if v == "auto" { None } else { Some(parse_f64(k, v)?) };
            }
            "pde.cfl" => self.pde.cfl = parse_f64(k, v)?,
            "pde.t_final" => self.pde.t_final = parse_f64(k, v)?,
            "pde.order" => self.pde.order = parse_with(k, v)?,
            "pde.operator" => self.pde.operator = parse_with(k, v)?,
            "pde.eta_list" => self.pde.eta_list = parse_list(k, v)?.iter().map(|e| e.abs()).collect(),
            "pde.probe_a" => self.pde.probe_a = parse_f64(k, v)?,
            "pde.a_values" => self.pde.a_values = parse_list(k, v)?,
            "pde.window_flat" => self.pde.window_flat = parse_f64(k, v)?,
            "pde.window_taper" => self.pde.window_taper = parse_f64(k, v)?,
            "pde.sponge_start" => self.pde.sponge_start = parse_f64(k, v)?,
            "pde.sponge_strength" => self.pde.sponge_strength = parse_f64(k, v)?,
            "pde.u_nodes" => self.pde.u_nodes = parse_usize(k, v)?,
            "pde.u_max" => self.pde.u_max = parse_f64(k, v)?,
            "pde.coarse_check" => self.pde.coarse_check = parse_bool(k, v)?,
            "output.dir" => self.out_dir = v.to_string(),
            "output.deterministic" => self.deterministic = parse_bool(k, v)?,
            _ => return Err(ConfigError::UnknownKey(k.to_string())),
        }
        Ok(())
    }

    /// All settings in a fixed order, formatted so that they parse back exactly.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.pde;
        vec![
            ("profile.form", self.profile_form.to_string()),
            ("profile.a_minus", self.a_minus.to_string()),
            ("profile.a_plus", self.a_plus.to_string()),
            ("profile.tau", self.tau.to_string()),
            ("flow.ode_tol", self.ode_tol.to_string()),
            ("flow.rho_min", self.flow_rho_min.to_string()),
            ("horizon.x0_max", self.horizon_x0_max.to_string()),
            ("horizon.samples", self.horizon_samples.to_string()),
            ("horizon.tol", self.bisection_tol.to_string()),
            ("packet.alpha", self.alpha.to_string()),
            ("packet.eps", self.eps.to_string()),
            ("packet.a_values", list_str(&self.a_values)),
            ("packet.numeric_norm", self.numeric_norm.to_string()),
            ("packet.profile_span", self.profile_span.to_string()),
            ("packet.profile_points", self.profile_points.to_string()),
            ("eta.max", self.eta_max.to_string()),
            ("eta.points", self.eta_points.to_string()),
            ("quad.tol", self.quad_tol.to_string()),
            ("limit.a_values", list_str(&self.limit_a_values)),
            ("pde.rho_min", p.rho_min.to_string()),
            ("pde.rho_max", p.rho_max.to_string()),
            ("pde.n_rho", p.n_rho.to_string()),
            ("pde.dt", p.dt.map_or_else(|| "auto".to_string(), |d| d.to_string())),
            ("pde.cfl", p.cfl.to_string()),
            ("pde.t_final", p.t_final.to_string()),
            ("pde.order", p.order.to_string()),
            ("pde.operator", p.operator.to_string()),
            ("pde.eta_list", list_str(&p.eta_list)),
            ("pde.probe_a", p.probe_a.to_string()),
            ("pde.a_values", list_str(&p.a_values)),
            ("pde.window_flat", p.window_flat.to_string()),
            ("pde.window_taper", p.window_taper.to_string()),
            ("pde.sponge_start", p.sponge_start.to_string()),
            ("pde.sponge_strength", p.sponge_strength.to_string()),
            ("pde.u_nodes", p.u_nodes.to_string()),
            ("pde.u_max", p.u_max.to_string()),
            ("pde.coarse_check", p.coarse_check.to_string()),
            ("output.dir", self.out_dir.clone()),
            ("output.deterministic", self.deterministic.to_string()),
        ]
    }

    pub fn to_kv_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies the settings in `text` on top of `self`.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k, v).map_err(|e| match e {
                ConfigError::UnknownKey(_) | ConfigError::Value { .. } => ConfigError::Syntax {
                    line: i + 1,
                    msg: e.to_string(),
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_kv_str(&text)
    }

    /// Checks ranges and ordering of all settings.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.profile().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (name, v) in [
            ("flow.ode_tol", self.ode_tol),
            ("flow.rho_min", self.flow_rho_min),
            ("horizon.tol", self.bisection_tol),
            ("quad.tol", self.quad_tol),
            ("horizon.x0_max", self.horizon_x0_max),
            ("packet.alpha", self.alpha),
            ("packet.profile_span", self.profile_span),
            ("eta.max", self.eta_max),
            ("pde.cfl", self.pde.cfl),
            ("pde.t_final", self.pde.t_final),
            ("pde.probe_a", self.pde.probe_a),
            ("pde.u_max", self.pde.u_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.eps > 0.0 && self.eps <= 0.5) {
            return bad(format!("packet.eps must lie in (0, 1/2], got {}", self.eps));
        }
        for (name, list) in [
            ("packet.a_values", &self.a_values),
            ("limit.a_values", &self.limit_a_values),
            ("pde.a_values", &self.pde.a_values),
            ("pde.eta_list", &self.pde.eta_list),
        ] {
            if list.is_empty() {
                return bad(format!("{name} is empty"));
            }
            if list.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return bad(format!("{name} entries must be positive"));
            }
            if list.windows(2).any(|w| !(w[1] > w[0])) {
                return bad(format!("{name} must be strictly increasing"));
            }
        }
        if self.eta_points < 2 || self.profile_points < 2 || self.horizon_samples < 3 {
            return bad("eta.points, packet.profile_points need >= 2 and horizon.samples >= 3".into());
        }
        let p = &self.pde;
        if !(p.rho_min > 0.0
            && p.rho_min < p.window_flat
            && p.window_flat < p.window_taper
            && p.window_taper <= p.sponge_start
            && p.sponge_start < p.rho_max)
        {
            return bad(format!(
                "pde radii must satisfy 0 < rho_min < window_flat < window_taper <= sponge_start < rho_max, got {} {} {} {} {}",
                p.rho_min, p.window_flat, p.window_taper, p.sponge_start, p.rho_max
            ));
        }
        if p.n_rho < 16 || p.u_nodes < 1 || p.sponge_strength < 0.0 {
            return bad("pde.n_rho >= 16, pde.u_nodes >= 1 and pde.sponge_strength >= 0 required".into());
        }
        if let Some(dt) = p.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("pde.dt must be positive, got {dt}"));
            }
        }
        if self.out_dir.trim().is_empty() {
            return bad("output.dir is empty".into());
        }
        Ok(())
    }

    pub fn profile(&self) -> acoustic_hawking::Result<VelocityProfile> {
        VelocityProfile::new(self.a_minus, self.a_plus, self.tau, self.profile_form)
    }

    pub fn flow_config(&self) -> acoustic_hawking::Result<FlowConfig> {
        Ok(FlowConfig::new(self.profile()?)
            .with_tolerance(self.ode_tol)
            .with_rho_min(self.flow_rho_min))
    }

    pub fn separatrix_options(&self) -> SeparatrixOptions {
        SeparatrixOptions {
            bracket: None,
            x0_horizon_max: self.horizon_x0_max,
            samples: self.horizon_samples,
            tol: self.bisection_tol,
        }
    }

    /// Uniform `|eta|` grid `[0, eta.max]`.
    pub fn eta_grid(&self) -> Vec<f64> {
        let n = self.eta_points;
        (0..n).map(|i| self.eta_max * i as f64 / (n - 1) as f64).collect()
    }

    pub fn radial_grid(&self) -> acoustic_hawking::Result<RadialGrid> {
        let p = &self.pde;
        let max_drift = self.a_minus.abs().max(self.a_plus.abs());
        let grid = match p.dt {
            Some(dt) => RadialGrid::new(p.rho_min, p.rho_max, p.n_rho, dt, p.order)?,
            None => RadialGrid::with_cfl(p.rho_min, p.rho_max, p.n_rho, p.cfl, max_drift, p.order)?,
        };
        grid.check_cfl(max_drift)?;
        Ok(grid.with_sponge(p.sponge_start, p.sponge_strength)?.with_operator(p.operator))
    }

    pub fn remainder_config(&self) -> acoustic_hawking::Result<RemainderConfig> {
        let p = &self.pde;
        let mut cfg = RemainderConfig::new(self.radial_grid()?, p.t_final);
        cfg.window = DataWindow {
            flat_end: p.window_flat,
            taper_end: p.window_taper,
        };
        cfg.alpha = self.alpha;
        cfg.eps = self.eps;
        cfg.a_values = p.a_values.clone();
        cfg.u_nodes = p.u_nodes;
        cfg.u_max = p.u_max;
        cfg.probe_a = p.probe_a;
        cfg.probe_eta = p.eta_list.clone();
        cfg.coarse_check = p.coarse_check;
        Ok(cfg)
    }
}
