//! One test per acceptance criterion. Each prints a single PASS/FAIL line with
//! the measured value, the pinned tolerance and the runtime.

use std::f64::consts::PI;
use std::fs;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use acoustic_hawking::flow::{find_separatrix, FlowMap};
use acoustic_hawking::packet::{packet_norm_closed, packet_norm_numeric, PacketParams};
use acoustic_hawking::remainder::remainder_study;
use acoustic_hawking::special::{fourier_transform_quadrature, gamma0_norm_sqr, packet_fourier, GammaParams};
use acoustic_hawking::spectrum::{creation_density, limit_sweep, projection_density};
use acoustic_hawking::wave::{dalembert_convergence, SchemeOrder};
use acoustic_hawking_cli::config::RunConfig;

// serialized so the runtimes are not inflated by each other
static LOCK: Mutex<()> = Mutex::new(());

fn report(id: u32, name: &str, pass: bool, measured: String, tolerance: &str, elapsed: Duration) {
    let mark = if pass { "PASS" } else { "FAIL" };
    println!(
        "{mark} [{id}] {name}: {measured} (tolerance {tolerance}) in {:.3} s",
        elapsed.as_secs_f64()
    );
}

fn smooth_step_map() -> FlowMap {
    let c = RunConfig::default();
    find_separatrix(&c.flow_config().unwrap(), &c.separatrix_options()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn criterion_1_horizon_limits() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let map = smooth_step_map();
    let h = &map.horizon;
    let (first, last) = (h.x0[0], h.x0[h.x0.len() - 1]);
    assert_eq!((first, last), (-10.0, 10.0));
    let past = (h.rho_star[0] - 1.2).abs();
    let future = (h.rho_star[h.rho_star.len() - 1] - 0.8).abs();
    let el = t.elapsed();
    let pass = past < 1e-3 && future < 1e-3 && el.as_secs_f64() < 1.0;
    report(
        1,
        "horizon limits",
        pass,
        format!("|rho*(-10)-1.2| = {past:.3e}, |rho*(+10)-0.8| = {future:.3e}"),
        "< 1e-3 each, < 1 s",
        el,
    );
    assert!(pass);
}

#[test]
fn criterion_2_packet_norm() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let map = smooth_step_map();
    let mut worst = 0.0f64;
    for alpha in [0.5, 1.0, 2.0] {
        for eps in [0.1, 0.25, 0.5] {
            let p = PacketParams::new(alpha, 8.0, eps, map.sigma_star).unwrap();
            let closed = 4.0 * PI * alpha * acoustic_hawking::special::gamma_real(2.0 * eps) / 16f64.powf(2.0 * eps);
            assert!(rel(packet_norm_closed(&p), closed) < 1e-14);
            worst = worst.max(rel(packet_norm_numeric(&p, &map, 0.0, 1e-11).unwrap(), closed));
        }
    }
    let el = t.elapsed();
    let pass = worst < 1e-6 && el.as_secs_f64() < 1.0;
    report(2, "packet norm", pass, format!("max rel err {worst:.3e} over 9 cases"), "< 1e-6, < 1 s", el);
    assert!(pass);
}

#[test]
fn criterion_3_fourier_closed_form() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let (alpha, eps, a) = (1.0, 0.25, 8.0);
    let gp = GammaParams::new(alpha, eps).unwrap();
    let mut worst = 0.0f64;
    for k in 0..50 {
        let eta = -40.0 + 80.0 * k as f64 / 49.0;
        let closed = packet_fourier(eta, &gp, a).unwrap();
        let direct = fourier_transform_quadrature(eta, alpha, eps, a, 1e-12).unwrap();
        worst = worst.max((direct - closed).norm() / closed.norm());
    }
    let el = t.elapsed();
    let pass = worst < 1e-8 && el.as_secs_f64() < 5.0;
    report(3, "fourier closed form", pass, format!("max rel err {worst:.3e} over 50 eta"), "< 1e-8, < 5 s", el);
    assert!(pass);
}

#[test]
fn criterion_4_density_identity() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let c = RunConfig::default();
    let map = smooth_step_map();
    let p = PacketParams::new(c.alpha, c.a_values[0], c.eps, map.sigma_star).unwrap();
    let mut worst = 0.0f64;
    for eta in c.eta_grid().into_iter().filter(|e| *e > 0.0) {
        let closed = creation_density(eta, &p).unwrap();
        worst = worst.max(rel(projection_density(eta, &p).unwrap(), closed));
    }
    let el = t.elapsed();
    let pass = worst < 1e-10;
    report(
        4,
        "density identity",
        pass,
        format!("max rel diff {worst:.3e} between -4Re(c1 conj c2) and the closed form"),
        "< 1e-10",
        el,
    );
    assert!(pass);
}

#[test]
fn criterion_5_asymptotic_limit() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let map = smooth_step_map();
    let sweep = limit_sweep(1.0, 0.25, &[4.0, 8.0, 16.0, 32.0, 64.0], map.sigma_star, 1e-10).unwrap();
    let exponent = sweep.exponent.unwrap();
    let last = sweep.rows.last().unwrap().residual.abs();
    let el = t.elapsed();
    println!(
        "     limit {:.10}, variant {:.10} (ratio {:.6})",
        sweep.limit,
        sweep.limit_variant,
        sweep.limit_variant / sweep.limit
    );
    let pass = (0.8..=1.2).contains(&exponent) && last < 0.02 && el.as_secs_f64() < 10.0;
    report(
        5,
        "asymptotic limit",
        pass,
        format!("exponent {exponent:.4}, residual at a=64 {last:.3e}"),
        "exponent in [0.8, 1.2], residual < 2e-2, < 10 s",
        el,
    );
    assert!(pass);
}

#[test]
fn criterion_6_gamma_identity() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let mut worst = 0.0f64;
    for alpha in [0.5, 1.0, 2.0] {
        let gp = GammaParams::new(alpha, 1e-6).unwrap();
        let limit = 2.0 * PI * alpha / (1.0 - (-2.0 * PI * alpha).exp());
        worst = worst.max(rel(gamma0_norm_sqr(&gp), limit));
    }
    let el = t.elapsed();
    let pass = worst < 1e-4;
    report(6, "gamma identity", pass, format!("max rel err {worst:.3e}"), "< 1e-4", el);
    assert!(pass);
}

#[test]
fn criterion_7_pde_remainder() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let c = RunConfig::default();
    assert_eq!(c.pde.n_rho, 4096);
    let cfg = c.remainder_config().unwrap();
    let report_ = remainder_study(&cfg, &smooth_step_map()).unwrap();
    let conv = dalembert_convergence(SchemeOrder::Second, 201, 4, 2.0).unwrap();
    let el = t.elapsed();
    for w in &report_.warnings {
        println!("     warning: {w}");
    }
    let pass = report_.fit_exponent >= 0.5
        && report_.probe_slope <= -0.8
        && conv.self_convergence_order >= 1.9
        && el.as_secs_f64() < 300.0;
    report(
        7,
        "pde remainder",
        pass,
        format!(
            "a-exponent {:.4}, eta-slope {:.4}, d'Alembert order {:.4}",
            report_.fit_exponent, report_.probe_slope, conv.self_convergence_order
        ),
        "a-exponent >= 0.5, eta-slope <= -0.8, order >= 1.9, < 300 s",
        el,
    );
    assert!(pass);
}

#[test]
fn criterion_8_reproducibility() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        let status = Command::new(env!("CARGO_BIN_EXE_ahawk"))
            .arg("spectrum")
            .arg("--out")
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
        let mut names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        names
            .into_iter()
            .map(|p| (p.clone(), fs::read(p).unwrap()))
            .collect::<Vec<_>>()
    };
    let first = run();
    let second = run();
    let differing = first.iter().zip(&second).filter(|(a, b)| a != b).count() + first.len().abs_diff(second.len());
    let el = t.elapsed();
    let pass = differing == 0 && !first.is_empty();
    report(
        8,
        "reproducibility",
        pass,
        format!("{differing} of {} files differ", first.len()),
        "byte-identical",
        el,
    );
    assert!(pass);
}
