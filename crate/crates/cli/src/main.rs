use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use elastoscan_cli::commands;
use elastoscan_cli::config::{parse_threshold, RunConfig};
use elastoscan_cli::exit_code;
use elastoscan_cli::run::Setup;

#[derive(Parser)]
#[command(
    name = "elastoscan",
    version,
    about = "Inclusion detection in elastic plates from time-harmonic boundary data"
)]
struct Cli {
    /// Run configuration file (`elastoscan-run v1`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Analysis frequencies, comma separated; Hz unless --rad-s.
    #[arg(long, global = true, value_delimiter = ',')]
    omega: Option<Vec<f64>>,
    /// Read frequencies as angular frequencies in rad/s.
    #[arg(long, global = true)]
    rad_s: bool,
    /// Test-direction scales relative to the inclusion contrast, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Absolute eigenvalue threshold.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Count bound: `auto` or a strict bound N (accept when fewer than N negative eigenvalues).
    #[arg(long, global = true)]
    ml: Option<String>,
    /// Injected noise relative to the background NtD norm.
    #[arg(long, global = true)]
    noise: Option<f64>,
    /// Seed of the injected noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Omit timestamps so identical inputs give identical files.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Run at frequencies outside the analysis bands.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the mesh and write its summary, geometry and sensor layout.
    Mesh,
    /// Solve the forward problems for the phantom and write sensor traces.
    Forward {
        /// Also write per-load time records and the sensor sidecar.
        #[arg(long)]
        records: bool,
    },
    /// Write background and true NtD matrices (and noisy ones when noise > 0).
    Ntd,
    /// Run the box tests and write a JSON report and SVG grid per frequency.
    Reconstruct {
        /// Measured NtD matrix; omitted: synthetic data from the phantom.
        #[arg(long)]
        measured: Option<PathBuf>,
    },
    /// Turn record CSV files into a measured NtD matrix.
    Ingest {
        #[arg(long)]
        sidecar: PathBuf,
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Check the frequency assumption, monotonicity inequalities and linearization error.
    Check {
        /// Search START:STOP Hz for the frequency where the assumption first fails.
        #[arg(long)]
        scan: Option<String>,
    },
    /// Re-render the SVG of a saved report.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn configure(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(f) = &cli.omega {
        c.frequencies = f.clone();
    }
    if cli.rad_s {
        c.interpret_hz = false;
    }
    if let Some(a) = &cli.alpha {
        c.alpha_scales = a.clone();
    }
    if let Some(d) = cli.delta {
        c.delta = Some(d);
    }
    if let Some(m) = &cli.ml {
        c.threshold = parse_threshold(m).ok_or_else(|| {
            elastoscan::Error::Schema(format!("--ml expects `auto` or a count, got `{m}`"))
        })?;
    }
    if let Some(n) = cli.noise {
        c.noise = n;
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    Ok(c)
}

fn parse_scan(s: &str) -> anyhow::Result<(f64, f64)> {
    let bad = || elastoscan::Error::Schema(format!("--scan expects START:STOP in Hz, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn execute(cli: Cli) -> anyhow::Result<String> {
    if let Command::Report { input } = &cli.command {
        return commands::cmd_report(input, &cli.out);
    }
    let config = configure(&cli)?;
    let setup = Setup::new(config)?;
    let out = &cli.out;
    match &cli.command {
        Command::Mesh => commands::cmd_mesh(&setup, out),
        Command::Forward { records } => {
            commands::check_bands(&setup, cli.force)?;
            commands::cmd_forward(&setup, out, *records)
        }
        Command::Ntd => {
            commands::check_bands(&setup, cli.force)?;
            commands::cmd_ntd(&setup, out)
        }
        Command::Reconstruct { measured } => {
            if measured.is_none() {
                commands::check_bands(&setup, cli.force)?;
            }
            commands::cmd_reconstruct(&setup, out, measured.as_deref(), cli.reproducible)
        }
        Command::Ingest { sidecar, records } => {
            commands::cmd_ingest(&setup, out, sidecar, records, cli.force)
        }
        Command::Check { scan } => {
            let scan = scan.as_deref().map(parse_scan).transpose()?;
            commands::cmd_check(&setup, out, scan)
        }
        Command::Report { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(summary) => {
            print!("{summary}");
            if !summary.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
