use std::path::PathBuf;
use std::process::ExitCode;

use acoustic_hawking_cli::commands::{self, CliError};
use acoustic_hawking_cli::config::ConfigError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ahawk", version, about = "Particle creation by a time-dependent rotating acoustic black hole")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one setting, e.g. `--set packet.alpha=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Output directory (`output.dir`).
    #[arg(long, global = true)]
    out: Option<String>,

    /// Radial grid points (`pde.n_rho`).
    #[arg(long, global = true)]
    nrho: Option<usize>,

    /// Time step (`pde.dt`); `auto` derives it from the CFL number.
    #[arg(long, global = true)]
    dt: Option<String>,

    /// Final time of the wave evolution (`pde.t_final`).
    #[arg(long, global = true)]
    tfinal: Option<f64>,

    /// Comma-separated |eta| values of the per-mode probe (`pde.eta_list`).
    #[arg(long = "eta-list", global = true)]
    eta_list: Option<String>,

    /// Finite-difference order, 2 or 4 (`pde.order`).
    #[arg(long, global = true)]
    order: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Locate the separatrix and write the horizon curve.
    Horizon,
    /// Spectrum tables, packet norms and totals for each packet width.
    Spectrum,
    /// Normalized numbers along the width sweep against the limit.
    Limit,
    /// Evolve exact modes and measure the deviation from the eikonal projections.
    PdeVerify,
    /// Quick consistency checks against closed forms.
    Selftest,
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("--set expects KEY=VALUE, got `{s}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let flags = [
        ("output.dir", cli.out.clone()),
        ("pde.n_rho", cli.nrho.map(|n| n.to_string())),
        ("pde.dt", cli.dt.clone()),
        ("pde.t_final", cli.tfinal.map(|t| t.to_string())),
        ("pde.eta_list", cli.eta_list.clone()),
        ("pde.order", cli.order.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    }
    Ok(out)
}

fn init_threads() -> Result<(), ConfigError> {
    let Ok(raw) = std::env::var("AHAWK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| ConfigError::Invalid(format!("AHAWK_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError::Invalid(e.to_string()))
}

fn run(cli: &Cli) -> Result<String, CliError> {
    init_threads()?;
    let config = commands::resolve_config(cli.config.as_deref(), &overrides(cli)?)?;
    match cli.command {
        Command::Horizon => commands::horizon(&config),
        Command::Spectrum => commands::spectrum(&config),
        Command::Limit => commands::limit(&config),
        Command::PdeVerify => commands::pde_verify(&config),
        Command::Selftest => commands::selftest(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
