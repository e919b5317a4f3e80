use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ghrc_cli::{run, Stage};

/// Geometric processing of simulated geostationary scan-mirror frames.
#[derive(Debug, Parser)]
#[command(name = "ghrc", version)]
struct Cli {
    stage: Stage,
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory shared by all stages of a run.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Encoder-noise seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.stage, &cli.config, &cli.out, cli.seed) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
