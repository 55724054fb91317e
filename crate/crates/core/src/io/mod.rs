//! Configuration, output and CLI.

pub mod cli;
pub mod config;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

use crate::diagnostics::certify;
use crate::integrator::{simulate_with, Termination};

pub use config::{load_config, parse_config, Format, ResolvedRun, RunConfig, OUTPUT_ROOT_ENV};
pub use output::{summary_config, write_trajectory, RunSummary, RunWriter};

/// Failures of a configured run, grouped by exit code.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] crate::Error),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// 1: configuration, 2: numerical, 3: I/O.
    pub fn exit_code(&self) -> u8 {
        use crate::Error as E;
        match self {
            RunError::Config(_) => 1,
            RunError::Model(
                E::InvalidState(_)
                | E::InvalidParams(_)
                | E::InvalidConfig(_)
                | E::FormationMismatch { .. }
                | E::InitialOverlap { .. },
            ) => 1,
            RunError::Model(_) | RunError::Numerical(_) => 2,
            RunError::Read { .. } | RunError::Write { .. } => 3,
        }
    }
}

/// Simulate a resolved run, streaming its output to disk.
pub fn execute(run: &ResolvedRun) -> Result<RunSummary, RunError> {
    let s = &run.scenario;
    let certificate = certify(&s.initial, &s.formation, &s.params)?;
    let mut writer = RunWriter::create(
        &run.output_dir,
        s.initial.n(),
        s.initial.dim(),
        run.cadence,
        run.writes(Format::Csv),
    )?;
    let (events, termination, stats) = simulate_with(&s.initial, &s.params, &s.formation, &s.cfg, |sample| {
        writer.observe(sample)
    })?;
    writer.finish(&events, termination, stats, run, certificate)
}

impl RunSummary {
    pub fn failed_numerically(&self) -> bool {
        self.termination == Termination::StepFloor
    }
}
