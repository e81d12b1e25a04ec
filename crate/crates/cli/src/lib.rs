//! Configuration, orchestration and output handling behind the
//! `wavepolymer` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

pub use commands::Command;
pub use config::RunConfig;
pub use output::{OutputDir, RunManifest};

/// Runs one subcommand on a dedicated pool of `threads` workers and writes
/// `manifest.json` next to the outputs.
pub fn run(command: Command, cfg: &RunConfig, out_dir: &Path, threads: usize) -> anyhow::Result<RunManifest> {
    let started_at = output::now();
    let mut out = OutputDir::create(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    pool.install(|| command.execute(cfg, &mut out))?;
    let manifest = RunManifest {
        subcommand: command.name().to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: output::now(),
        threads,
        spectral_tail_bound: cfg.noise_spectrum()?.tail_bound(),
        outputs: out.outputs().to_vec(),
        warnings: out.warnings.clone(),
    };
    let mut sink = OutputDir::create(out_dir)?;
    sink.json("manifest.json", &manifest)?;
    Ok(manifest)
}
