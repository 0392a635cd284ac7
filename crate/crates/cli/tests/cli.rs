use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use acoustic_hawking_cli::config::RunConfig;
use proptest::prelude::*;

fn ahawk(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ahawk"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("AHAWK_THREADS")
        .output()
        .expect("binary runs")
}

/// Data rows of a CSV written by the tool, skipping `#` lines and the header.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn constant_flow_horizon_sits_at_unit_radius() {
    let dir = tempfile::tempdir().unwrap();
    let out = ahawk(
        &["horizon", "--set", "profile.form=constant", "--set", "profile.a_minus=-1", "--set", "profile.a_plus=-1"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for r in rows(&dir.path().join("horizon.csv")) {
        assert!((r[1] - 1.0).abs() < 1e-9, "rho* = {} at x0 = {}", r[1], r[0]);
    }
    let doc = json(&dir.path().join("horizon.json"));
    assert!((doc["sigma_star"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(doc["config"]["profile_form"], "constant");
}

#[test]
fn spectrum_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let out = ahawk(&["spectrum"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("spectrum_a8.csv")).unwrap();
    assert!(text.starts_with("# ahawk spectrum\n"));
    assert!(text.contains("# packet.eps = 0.25\n"));

    let table = rows(&dir.path().join("spectrum_a8.csv"));
    assert_eq!(table.len(), 513);
    assert_eq!(table[0][1], 0.0);
    assert!(table.iter().all(|r| r[1] >= 0.0));

    for r in rows(&dir.path().join("norms.csv")) {
        assert!(r[3] < 1e-6, "norm mismatch at a = {}", r[0]);
    }
    let totals = json(&dir.path().join("totals.json"));
    let list: Vec<f64> = totals["totals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["total"].as_f64().unwrap())
        .collect();
    assert_eq!(list.len(), 3);
    assert!(list.windows(2).all(|w| w[1] < w[0]), "totals {list:?}");
}

#[test]
fn limit_writes_sweep_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = ahawk(&["limit"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = rows(&dir.path().join("sweep.csv"));
    assert_eq!(sweep.iter().map(|r| r[0]).collect::<Vec<_>>(), [4.0, 8.0, 16.0, 32.0, 64.0]);
    let doc = json(&dir.path().join("limit.json"));
    let limit = doc["limit"].as_f64().unwrap();
    assert!(sweep.iter().all(|r| r[3] == limit));
    assert!(doc["fit_exponent"].as_f64().is_some());
    assert!(doc["limit_variant"].as_f64().unwrap() < limit);
}

#[test]
fn short_sweep_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let out = ahawk(&["limit", "--set", "limit.a_values=8,16"], dir.path());
    assert!(out.status.success());
    let doc = json(&dir.path().join("limit.json"));
    let warnings = doc["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().starts_with("fit-degenerate")));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fit-degenerate"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| ahawk(args, dir.path()).status.code().unwrap();
    assert_eq!(code(&["horizon", "--set", "profile.tau=-1"]), 2);
    assert_eq!(code(&["horizon", "--set", "no.such.key=1"]), 2);
    assert_eq!(code(&["horizon", "--set", "packet.eps=0.75"]), 2);
    assert_eq!(code(&["horizon", "--config", "/nonexistent/run.cfg"]), 2);
    assert_eq!(code(&["pde-verify", "--nrho", "64"]), 4);
    assert_eq!(code(&["selftest"]), 0);

    // the output directory cannot be created under a regular file
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = ahawk(&["horizon"], &blocker.join("sub"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# custom\npacket.alpha = 2\npacket.a_values = 8\n").unwrap();
    let out = ahawk(&["spectrum", "--config", cfg.to_str().unwrap(), "--set", "packet.eps=0.5"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&dir.path().join("totals.json"));
    assert_eq!(doc["config"]["alpha"], 2.0);
    assert_eq!(doc["config"]["eps"], 0.5);
    assert!(!dir.path().join("spectrum_a16.csv").exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let one = tempfile::tempdir().unwrap();
    let many = tempfile::tempdir().unwrap();
    for (dir, n) in [(&one, "1"), (&many, "4")] {
        let status = Command::new(env!("CARGO_BIN_EXE_ahawk"))
            .args(["spectrum", "--set", "packet.a_values=8"])
            .arg("--out")
            .arg(dir.path())
            .env("AHAWK_THREADS", n)
            .status()
            .unwrap();
        assert!(status.success());
    }
    // identical apart from the echoed output directory
    let read = |dir: &Path, name: &str| fs::read_to_string(dir.join(name)).unwrap().replace(dir.to_str().unwrap(), "OUT");
    for name in ["spectrum_a8.csv", "packet_a8.csv", "norms.csv", "totals.json"] {
        assert_eq!(read(one.path(), name), read(many.path(), name), "{name}");
    }

    let out = Command::new(env!("CARGO_BIN_EXE_ahawk"))
        .arg("selftest")
        .env("AHAWK_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_text_round_trips(
        alpha in 0.1f64..5.0,
        eps in 0.01f64..0.5,
        tau in 0.1f64..4.0,
        a0 in 1.0f64..10.0,
        n in 64usize..8192,
    ) {
        let mut c = RunConfig::default();
        c.set("packet.alpha", &alpha.to_string()).unwrap();
        c.set("packet.eps", &eps.to_string()).unwrap();
        c.set("profile.tau", &tau.to_string()).unwrap();
        c.set("packet.a_values", &format!("{a0},{}", 2.0 * a0)).unwrap();
        c.set("pde.n_rho", &n.to_string()).unwrap();
        let back = RunConfig::from_kv_str(&c.to_kv_string()).unwrap();
        prop_assert_eq!(back.entries(), c.entries());
        prop_assert_eq!(back.alpha, alpha);
        prop_assert_eq!(back.tau, tau);
    }
}
