//! Pipeline stages behind the `ghrc` binary. Every stage reads the run configuration and
//! works inside one output directory, exchanging rasters, the truth log and a cumulative
//! JSON run report through it.

pub mod config;
pub mod eval;
pub mod report;
pub mod stages;

use std::path::Path;

pub use config::RunConfig;
pub use report::RunReport;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("cannot write output: {0}")]
    Output(String),
    #[error(transparent)]
    Processing(ghrc_core::Error),
}

impl From<ghrc_core::Error> for CliError {
    fn from(e: ghrc_core::Error) -> Self {
        use ghrc_core::Error as E;
        match e {
            E::Config(_) | E::Precondition(_) | E::Io { .. } | E::Json { .. } => CliError::Input(e.to_string()),
            other => CliError::Processing(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Output(_) | CliError::Processing(_) => 1,
        }
    }
}

/// How a stage that ran to completion went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Finished, but some frames or bands fell back (or evaluation rows failed).
    Partial,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Partial => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Simulate,
    Georef,
    Bbr,
    Calibrate,
    Mosaic,
    Eval,
}

/// Loads the configuration and runs one stage.
pub fn run(stage: Stage, config: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome, CliError> {
    let cfg = RunConfig::load(config, seed)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Output(format!("{}: {e}", out.display())))?;
    match stage {
        Stage::Simulate => stages::simulate(&cfg, out),
        Stage::Georef => stages::georef(&cfg, out),
        Stage::Bbr => stages::bbr(&cfg, out),
        Stage::Calibrate => stages::calibrate(&cfg, out),
        Stage::Mosaic => stages::mosaic(&cfg, out),
        Stage::Eval => eval::eval(&cfg, out),
    }
}
