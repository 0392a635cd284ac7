//! Subcommands. Each writes its files under `output.dir` and returns a short
//! human-readable summary for stdout.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use acoustic_hawking::flow::{find_separatrix, FlowConfig, FlowMap, SeparatrixOptions, VelocityProfile};
use acoustic_hawking::packet::{packet_norm_closed, packet_norm_numeric, sample_profile, PacketParams};
use acoustic_hawking::remainder::{first_digit_stable, remainder_study};
use acoustic_hawking::special::{fourier_transform_quadrature, gamma0_norm_sqr, packet_fourier, GammaParams};
use acoustic_hawking::spectrum::{limit_sweep, spectrum_table, total_number, total_number_angular};
use acoustic_hawking::wave::{check_resolution, dalembert_convergence, solve_mode, DataWindow, SchemeOrder};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::output::{output_dir, tag, write_json, Csv};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numeric(#[from] acoustic_hawking::Error),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    /// 2 configuration, 3 numerical failure, 4 insufficient resolution, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        use acoustic_hawking::Error as E;
        match self {
            Self::Config(_) => 2,
            Self::Numeric(E::Domain(_)) => 2,
            Self::Numeric(E::Resolution(_)) => 4,
            Self::Numeric(_) | Self::Check(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn run_meta(config: &RunConfig, started: Instant) -> Vec<(&'static str, String)> {
    if config.deterministic {
        return Vec::new();
    }
    let unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    vec![
        ("generated_unix", unix.to_string()),
        ("elapsed_s", format!("{:.3}", started.elapsed().as_secs_f64())),
    ]
}

fn flow_map(config: &RunConfig) -> CliResult<FlowMap> {
    Ok(find_separatrix(&config.flow_config()?, &config.separatrix_options())?)
}

pub fn horizon(config: &RunConfig) -> CliResult<String> {
    let started = Instant::now();
    let map = flow_map(config)?;
    let dir = output_dir(config)?;
    let h = &map.horizon;
    let mut csv = Csv::new("horizon", config, &run_meta(config, started), &["x0", "rho_star"]);
    for (x, r) in h.x0.iter().zip(&h.rho_star) {
        csv.row(&[*x, *r]);
    }
    csv.write(&dir.join("horizon.csv"))?;
    let first = *h.rho_star.first().unwrap_or(&f64::NAN);
    let last = *h.rho_star.last().unwrap_or(&f64::NAN);
    write_json(
        &dir.join("horizon.json"),
        "horizon",
        config,
        json!({
            "sigma_star": map.sigma_star,
            "rho_star_past": first,
            "rho_star_future": last,
            "past_gap": map.past_gap,
            "future_gap": map.future_gap,
            "iterations": map.iterations,
        }),
    )?;
    Ok(format!(
        "sigma_star = {:.16e}\nrho_star(-{x}) = {first:.16e}  (|A(-inf)| = {})\nrho_star(+{x}) = {last:.16e}  (|A(+inf)| = {})\n",
        map.sigma_star,
        config.profile()?.past_speed(),
        config.profile()?.future_speed(),
        x = config.horizon_x0_max,
    ))
}

#[derive(Serialize)]
struct TotalsRow {
    a: f64,
    total: f64,
    total_normalized: f64,
    grid_total: f64,
    norm_closed: f64,
}

pub fn spectrum(config: &RunConfig) -> CliResult<String> {
    let started = Instant::now();
    let map = flow_map(config)?;
    let dir = output_dir(config)?;
    let grid = config.eta_grid();
    let mut totals = Vec::new();
    let mut norms = Csv::new("spectrum", config, &[], &["a", "norm_closed", "norm_numeric", "rel_err"]);
    let mut summary = format!("sigma_star = {:.16e}\n", map.sigma_star);
    for &a in &config.a_values {
        let p = PacketParams::new(config.alpha, a, config.eps, map.sigma_star)?;
        let table = spectrum_table(&p, &grid, config.quad_tol)?;
        let meta = [("a", tag(a))];
        let mut csv = Csv::new("spectrum", config, &meta, &["eta", "density", "c1_re", "c1_im", "c2_re", "c2_im"]);
        for i in 0..grid.len() {
            let (c1, c2) = (table.c1[i], table.c2[i]);
            csv.row(&[grid[i], table.density[i], c1.re, c1.im, c2.re, c2.im]);
        }
        csv.write(&dir.join(format!("spectrum_a{}.csv", tag(a))))?;

        let mut prof = Csv::new("spectrum", config, &meta, &["sigma", "re", "im", "abs"]);
        for (s, c) in sample_profile(&p, config.profile_span, config.profile_points) {
            prof.row(&[s, c.re, c.im, c.norm()]);
        }
        prof.write(&dir.join(format!("packet_a{}.csv", tag(a))))?;

        let closed = packet_norm_closed(&p);
        let numeric = if config.numeric_norm {
            packet_norm_numeric(&p, &map, 0.0, 1e-11)?
        } else {
            f64::NAN
        };
        norms.row(&[a, closed, numeric, (numeric - closed).abs() / closed]);
        summary += &format!(
            "a = {}: total = {:.10e}, normalized = {:.10e}\n",
            tag(a),
            table.total,
            table.total_normalized
        );
        totals.push(TotalsRow {
            a,
            total: table.total,
            total_normalized: table.total_normalized,
            grid_total: table.grid_total,
            norm_closed: closed,
        });
    }
    norms.write(&dir.join("norms.csv"))?;
    let meta: serde_json::Map<String, serde_json::Value> = run_meta(config, started)
        .into_iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    write_json(
        &dir.join("totals.json"),
        "spectrum",
        config,
        json!({ "sigma_star": map.sigma_star, "totals": totals, "meta": meta }),
    )?;
    Ok(summary)
}

pub fn limit(config: &RunConfig) -> CliResult<String> {
    let started = Instant::now();
    let map = flow_map(config)?;
    let dir = output_dir(config)?;
    let sweep = limit_sweep(config.alpha, config.eps, &config.limit_a_values, map.sigma_star, config.quad_tol)?;
    let mut csv = Csv::new(
        "limit",
        config,
        &run_meta(config, started),
        &["a", "total", "total_normalized", "limit", "residual"],
    );
    for r in &sweep.rows {
        csv.row(&[r.a, r.total, r.total_normalized, r.limit, r.residual]);
    }
    csv.write(&dir.join("sweep.csv"))?;
    let mut warnings = Vec::new();
    if sweep.rows.len() < 3 {
        warnings.push(format!(
            "fit-degenerate: {} sweep point(s) cannot test a convergence rate",
            sweep.rows.len()
        ));
    }
    write_json(
        &dir.join("limit.json"),
        "limit",
        config,
        json!({
            "limit": sweep.limit,
            "limit_variant": sweep.limit_variant,
            "variant_ratio": sweep.limit_variant / sweep.limit,
            "fit_exponent": sweep.exponent,
            "local_exponents": sweep.local_exponents,
            "k_over_a": sweep.k_over_a,
            "richardson": sweep.richardson,
            "warnings": warnings,
        }),
    )?;
    let mut out = format!(
        "limit = {:.16e}\nlimit_variant = {:.16e} (ratio {:.6})\n",
        sweep.limit,
        sweep.limit_variant,
        sweep.limit_variant / sweep.limit
    );
    match sweep.exponent {
        Some(e) => out += &format!("residual exponent = {e:.4}\n"),
        None => out += "residual exponent = n/a\n",
    }
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(out)
}

#[derive(Serialize)]
struct DeviationRow {
    a: f64,
    eta: f64,
    dev_rel: f64,
    fit_exponent: f64,
}

pub fn pde_verify(config: &RunConfig) -> CliResult<String> {
    let started = Instant::now();
    let cfg = config.remainder_config()?;
    let eta_top = config
        .pde
        .a_values
        .iter()
        .fold(0.0f64, |m, a| m.max(a * config.pde.u_max))
        .max(config.pde.eta_list.iter().fold(0.0, |m, e| m.max(*e)));
    check_resolution(eta_top, &cfg.grid)?;
    let map = flow_map(config)?;
    let dir = output_dir(config)?;
    let report = remainder_study(&cfg, &map)?;
    let conv = dalembert_convergence(SchemeOrder::Second, 201, 4, 2.0)?;

    let mut modes = Csv::new(
        "pde-verify",
        config,
        &run_meta(config, started),
        &["a", "eta", "dev_rel", "exact_re", "exact_im", "eikonal_re", "eikonal_im", "discretization"],
    );
    for m in report.modes.iter().chain(&report.probe) {
        modes.row(&[
            m.a,
            m.eta,
            m.dev_rel,
            m.exact.re,
            m.exact.im,
            m.eikonal.re,
            m.eikonal.im,
            m.discretization.unwrap_or(f64::NAN),
        ]);
    }
    modes.write(&dir.join("remainder_modes.csv"))?;
    let mut agg = Csv::new(
        "pde-verify",
        config,
        &[],
        &["a", "number_shift", "projection_rms", "discretization"],
    );
    for r in &report.aggregates {
        agg.row(&[r.a, r.number_shift, r.projection_rms, r.discretization.unwrap_or(f64::NAN)]);
    }
    agg.write(&dir.join("remainder_aggregate.csv"))?;

    // field snapshots of the first probe mode at the start and the end
    let eta = -config.pde.eta_list[0];
    let window = DataWindow {
        flat_end: config.pde.window_flat,
        taper_end: config.pde.window_taper,
    };
    let profile = config.profile()?;
    let snaps = solve_mode(eta, &cfg.grid, &profile, cfg.t_final, window, &[0.0, cfg.t_final])?;
    let nodes = cfg.grid.nodes();
    for (k, s) in snaps.iter().enumerate() {
        let meta = [("eta", tag(eta)), ("x0", tag(s.x0))];
        let mut csv = Csv::new("pde-verify", config, &meta, &["rho", "re", "im"]);
        for (r, v) in nodes.iter().zip(&s.f) {
            csv.row(&[*r, v.re, v.im]);
        }
        csv.write(&dir.join(format!("field_eta{}_{}.csv", tag(eta.abs()), k)))?;
    }

    let rows: Vec<DeviationRow> = report
        .modes
        .iter()
        .chain(&report.probe)
        .map(|m| DeviationRow {
            a: m.a,
            eta: m.eta,
            dev_rel: m.dev_rel,
            fit_exponent: report.fit_exponent,
        })
        .collect();
    // whether the remainder moves the leading digit of the normalized number
    let digits: Vec<serde_json::Value> = report
        .aggregates
        .iter()
        .filter(|r| r.a >= 16.0)
        .map(|r| {
            let p = PacketParams::new(config.alpha, r.a, config.eps, map.sigma_star)?;
            let tn = total_number(&p, config.quad_tol)?.value / packet_norm_closed(&p);
            Ok(json!({ "a": r.a, "total_normalized": tn, "number_shift": r.number_shift,
                       "first_digit_stable": first_digit_stable(tn, r.number_shift) }))
        })
        .collect::<Result<_, acoustic_hawking::Error>>()?;
    write_json(
        &dir.join("report.json"),
        "pde-verify",
        config,
        json!({
            "rows": rows,
            "aggregates": report.aggregates,
            "fit_exponent": report.fit_exponent,
            "rms_exponent": report.rms_exponent,
            "probe_slope": report.probe_slope,
            "dalembert": { "n_rho": conv.n_rho, "errors": conv.errors, "orders": conv.orders,
                           "self_convergence_order": conv.self_convergence_order },
            "leading_digit": digits,
            "warnings": report.warnings,
        }),
    )?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut out = String::new();
    for r in &report.aggregates {
        out += &format!(
            "a = {}: number shift = {:.4e}, projection rms = {:.4e}\n",
            tag(r.a),
            r.number_shift,
            r.projection_rms
        );
    }
    out += &format!(
        "fit exponent (a) = {:.4}\nprobe slope (eta) = {:.4}\nd'Alembert self-convergence order = {:.4}\n",
        report.fit_exponent, report.probe_slope, conv.self_convergence_order
    );
    Ok(out)
}

/// One quick consistency check.
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.limit
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Fast checks of the library against closed forms.
pub fn selftest_checks() -> acoustic_hawking::Result<Vec<Check>> {
    let mut checks = Vec::new();
    let gp = GammaParams::new(1.0, 1e-6)?;
    checks.push(Check {
        name: "gamma0 small-eps identity",
        value: rel(gamma0_norm_sqr(&gp), 2.0 * PI / (1.0 - (-2.0 * PI).exp())),
        limit: 1e-4,
    });
    let unit = find_separatrix(
        &FlowConfig::new(VelocityProfile::constant(-1.0)?),
        &SeparatrixOptions::default(),
    )?;
    checks.push(Check {
        name: "constant-flow horizon",
        value: (unit.sigma_star - 1.0).abs(),
        limit: 1e-9,
    });
    let p = PacketParams::new(1.0, 8.0, 0.25, 1.0)?;
    checks.push(Check {
        name: "packet norm",
        value: rel(packet_norm_numeric(&p, &unit, 0.0, 1e-11)?, packet_norm_closed(&p)),
        limit: 1e-6,
    });
    let gp = p.gamma_params();
    let closed = packet_fourier(-3.0, &gp, 8.0)?;
    checks.push(Check {
        name: "fourier transform",
        value: (fourier_transform_quadrature(-3.0, 1.0, 0.25, 8.0, 1e-12)? - closed).norm() / closed.norm(),
        limit: 1e-8,
    });
    checks.push(Check {
        name: "total number routes",
        value: rel(total_number(&p, 1e-11)?.value, total_number_angular(&p, 1e-11)?),
        limit: 1e-8,
    });
    let conv = dalembert_convergence(SchemeOrder::Second, 101, 3, 2.0)?;
    checks.push(Check {
        name: "d'Alembert order",
        value: 2.0 - conv.self_convergence_order,
        limit: 0.1,
    });
    Ok(checks)
}

pub fn selftest(_config: &RunConfig) -> CliResult<String> {
    let checks = selftest_checks()?;
    let mut out = String::new();
    let mut failed = 0;
    for c in &checks {
        let mark = if c.passed() { "PASS" } else { "FAIL" };
        if !c.passed() {
            failed += 1;
        }
        out += &format!("{mark} {}: {:.3e} (limit {:.1e})\n", c.name, c.value, c.limit);
    }
    if failed > 0 {
        print!("{out}");
        return Err(CliError::Check(format!("{failed} self-test check(s) failed")));
    }
    Ok(out)
}

/// Loads `path` if given, then applies `overrides` in order and validates.
pub fn resolve_config(path: Option<&Path>, overrides: &[(String, String)]) -> CliResult<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for (k, v) in overrides {
        config.set(k, v)?;
    }
    config.validate()?;
    Ok(config)
}
