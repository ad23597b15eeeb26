//! `mpin`: certificates, simulations and ensembles for Markov-switched pinned
//! networks.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 certificate failure
//! or divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use markov_pinning::config::ExperimentConfig;
use markov_pinning::experiment::{self, Artifacts, Setup};
use markov_pinning::Error;

#[derive(Parser, Debug)]
#[command(name = "mpin", version, about = "Pinning control of networks with Markov-switched topology")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config: slow-switching or mobile-spatial.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of runs (overrides the config).
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate every applicable stability certificate.
    Check(Common),
    /// Simulate trajectories and write per-run CSVs.
    Simulate(Common),
    /// Ensemble mean-square statistics.
    Montecarlo(Common),
    /// Agent positions and pin/link statistics.
    Mobility {
        #[command(flatten)]
        common: Common,
        /// Mobility step.
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Length of the run.
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
        /// Write positions every `stride` steps.
        #[arg(long, default_value_t = 100)]
        stride: usize,
    },
}

fn load(common: &Common) -> Result<(Setup, PathBuf), Error> {
    let (mut cfg, base) = match (&common.config, &common.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => {
            let cfg =
                ExperimentConfig::preset(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
            (cfg, PathBuf::from("."))
        }
        (None, None) => return Err(Error::Config("pass --config PATH or --preset NAME".into())),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = common.runs {
        cfg.runs = runs;
    }
    let out = common.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Ok((Setup::new(cfg, &base)?, out))
}

fn run(cli: Cli) -> Result<Artifacts, Error> {
    match cli.command {
        Command::Check(c) => {
            let (setup, out) = load(&c)?;
            experiment::report_certificates(&setup, &out)
        }
        Command::Simulate(c) => {
            let (setup, out) = load(&c)?;
            experiment::simulate(&setup, &out)
        }
        Command::Montecarlo(c) => {
            let (setup, out) = load(&c)?;
            experiment::montecarlo(&setup, &out)
        }
        Command::Mobility { common, dt, horizon, stride } => {
            let (setup, out) = load(&common)?;
            experiment::mobility_report(&setup, &out, dt, horizon, stride)
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::CertificateInapplicable(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(art) => {
            print!("{}", art.summary);
            for f in &art.files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::from(if art.failed { 2 } else { 0 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
