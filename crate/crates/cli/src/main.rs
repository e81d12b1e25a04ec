use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavepolymer_cli::{run, Command, RunConfig};

#[derive(Parser)]
#[command(name = "wavepolymer", version, about = "Damped stochastic wave polymer: simulation, Gibbs reweighting and checks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "WAVEPOLYMER_THREADS")]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Draw prior fields; write field dumps, local times and radii.
    Simulate,
    /// Grid and mode-sum radius of prior draws.
    Radius,
    /// Importance-sampling estimate of E^Q[R], optionally cross-checked by pCN.
    Gibbs,
    /// E^Q[R] across J and the log-log fit.
    Sweep,
    /// Run every inequality and oracle check.
    Verify,
    /// Girsanov martingale, tilt consistency and tilted-mean checks.
    GirsanovCheck,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Radius => Command::Radius,
            Cmd::Gibbs => Command::Gibbs,
            Cmd::Sweep => Command::Sweep,
            Cmd::Verify => Command::Verify,
            Cmd::GirsanovCheck => Command::GirsanovCheck,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_env("WAVEPOLYMER_LOG")
        .init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let Some(path) = &cli.config else { anyhow::bail!("--config PATH is required") };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.threads == Some(0) {
        anyhow::bail!("--threads must be at least 1");
    }
    let threads = cli.threads.or(cfg.threads).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let command = Command::from(cli.command);
    log::info!("{} with config hash {} on {threads} threads", command.name(), cfg.hash());
    let manifest = run(command, &cfg, &cli.out, threads)?;
    log::info!("wrote {} files to {}", manifest.outputs.len() + 1, cli.out.display());
    Ok(())
}
