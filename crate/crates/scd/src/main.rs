//! `scd` — experiment driver for the dispatching simulator.
//!
//! Options come from an optional TOML config file plus command-line
//! overrides; the fully resolved configuration is written next to the
//! results as `config_effective.toml`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde::Deserialize;

use scd_lb::experiment::{self, ExperimentSpec, Mode, MuDist};
use scd_lb::Error;

#[derive(Parser, Debug)]
#[command(name = "scd", about = "Load-balancing experiments: sweep, tail, timing, single")]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// sweep | tail | timing | single
    #[arg(long)]
    mode: Option<String>,

    /// Comma-separated policy names (e.g. scd,sed,jsq).
    #[arg(long)]
    policy: Option<String>,

    /// Comma-separated offered loads in (0,1).
    #[arg(long)]
    rho: Option<String>,

    /// Comma-separated master seeds.
    #[arg(long)]
    seed: Option<String>,

    /// Rounds per run.
    #[arg(long)]
    rounds: Option<u64>,

    /// Comma-separated server counts (timing mode runs each; other modes
    /// use the first).
    #[arg(long)]
    servers: Option<String>,

    #[arg(long)]
    dispatchers: Option<usize>,

    /// `uniform:lo,hi` or `fixed:r1,r2,…`.
    #[arg(long = "mu-dist")]
    mu_dist: Option<String>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Rounds excluded from response statistics.
    #[arg(long)]
    warmup: Option<u64>,

    /// Dump per-round queue vectors (single mode).
    #[arg(long)]
    trace: bool,

    /// Run sweep cells sequentially.
    #[arg(long)]
    serial: bool,
}

/// File-level settings; every field optional so the file can be partial.
#[derive(Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<String>,
    policies: Option<Vec<String>>,
    rho: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    rounds: Option<u64>,
    servers: Option<Vec<usize>>,
    dispatchers: Option<usize>,
    mu_dist: Option<String>,
    out: Option<PathBuf>,
    warmup: Option<u64>,
    trace: Option<bool>,
    serial: Option<bool>,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| Error::Config(format!("invalid {what} `{v}`: {e}")))
        })
        .collect()
}

fn build_spec(cli: &Cli) -> Result<ExperimentSpec, Error> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("bad config file: {e}")))?
        }
        None => FileConfig::default(),
    };

    let mode: Mode = cli
        .mode
        .clone()
        .or(file.mode)
        .unwrap_or_else(|| "sweep".into())
        .parse()?;
    let policies = match &cli.policy {
        Some(p) => parse_list::<String>(p, "policy")?,
        None => file.policies.unwrap_or_else(|| vec!["scd".into()]),
    };
    let rho_values = match &cli.rho {
        Some(r) => parse_list::<f64>(r, "rho")?,
        None => file.rho.unwrap_or_else(|| vec![0.9]),
    };
    let seeds = match &cli.seed {
        Some(s) => parse_list::<u64>(s, "seed")?,
        // Desk-scale default: 5 seeds.
        None => file.seeds.unwrap_or_else(|| (1..=5).collect()),
    };
    let server_counts = match &cli.servers {
        Some(s) => parse_list::<usize>(s, "server count")?,
        None => file.servers.unwrap_or_else(|| vec![100]),
    };
    let mu_dist: MuDist = cli
        .mu_dist
        .clone()
        .or(file.mu_dist)
        .unwrap_or_else(|| "uniform:1,10".into())
        .parse()?;

    let spec = ExperimentSpec {
        mode,
        server_counts,
        dispatchers: cli.dispatchers.or(file.dispatchers).unwrap_or(10),
        mu_dist,
        rho_values,
        policies,
        rounds: cli.rounds.or(file.rounds).unwrap_or(10_000),
        seeds,
        warmup_rounds: cli.warmup.or(file.warmup).unwrap_or(0),
        out_dir: cli
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("results")),
        trace: cli.trace || file.trace.unwrap_or(false),
        serial: cli.serial || file.serial.unwrap_or(false) || mode == Mode::Timing,
    };
    spec.validate()?;
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let spec = match build_spec(&cli) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(1);
        }
    };
    match experiment::run(&spec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::Config(_) | Error::UnknownPolicy(_) | Error::EmptyServerSet)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            ExitCode::from(2)
        }
    }
}
